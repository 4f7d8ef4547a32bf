# Tests for inventory distribution
