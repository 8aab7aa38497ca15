"""
Grid-graph helpers, file IO and argument parsing.
"""
