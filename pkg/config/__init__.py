"""Configuration defaults and the key = value loader"""
