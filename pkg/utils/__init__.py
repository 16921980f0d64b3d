"""Bit helpers and the error hierarchy shared by every service"""
