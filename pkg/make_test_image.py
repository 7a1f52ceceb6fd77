import sys

from src.solver.datagen import sample_picture
from src.solver.images import save_image

# Writes the deterministic 300x300 RGB picture used by the `image` subcommand examples.

path = sys.argv[1] if len(sys.argv) > 1 else "test_image.png"
save_image(path, sample_picture(300))
print(f"wrote {path}")
