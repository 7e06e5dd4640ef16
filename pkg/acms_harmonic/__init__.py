from importlib import metadata

NAME = "acms-harmonic"
VERSION = metadata.version("acms-harmonic")
