"""DCPR - A cloud-edge-device diffusion recommender for next-POI prediction."""
