"""Link-level simulation and optimization for RIS-assisted multiuser downlinks."""
__version__ = "0.1.0"
