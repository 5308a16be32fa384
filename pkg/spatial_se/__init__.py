# Multichannel speech enhancement / separation toolkit.
# Library entry points live in the submodules; the CLI is spatial_se.cli.
__version__ = "0.3.0"
