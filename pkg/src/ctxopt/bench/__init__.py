"""Data generators, experiment runners, IO and the command line."""
