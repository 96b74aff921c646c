# Test helpers