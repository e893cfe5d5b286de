"""Environments: four-photon OAM optics and a four-qubit circuit."""
