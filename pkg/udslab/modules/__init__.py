"""Feature modules of uds-lab (one package per numerical building block)."""
