"""terachan: conditional transformer-GAN channel generator for THz links.

Generates 15-MPC multipath channel parameter sets conditioned on link
distance, trains against a synthetic ground-truth channel distribution with
a gradient-penalty objective, and verifies the generated statistics (delay
spread, angular spread, power delay angular profiles, SSIM).
"""

__version__ = "0.1.0"
