"""Network, construction, learning and codec services"""
