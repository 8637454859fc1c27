"""Simulator and key-management library for a wide-area trusted-repeater QKD
network: decoy-state link physics, optical switching fabric, dynamic network
states, key pools with hop-by-hop relay, and the key-consuming applications.
"""

__version__ = "0.1.0"
