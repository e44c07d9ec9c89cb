# Tests package initializer


