"""Settings and the exception hierarchy shared by every service"""
