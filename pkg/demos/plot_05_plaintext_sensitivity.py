"""
Flipping one plaintext bit
==========================

Every stage is a permutation, an XOR or an addition mod 256.  Carries move
upward only, so flipping bit b of one pixel can never change a cipher bit
below level b.

"""

from pathlib import Path

from compmap import PUBLISHED_KEY
from compmap.diffusion import bit_flip_diff, plane_change_summary
from compmap.fileio import make_chosen_image, write_pgm

img = make_chosen_image("digit", 512, 512, 2)
report = bit_flip_diff(PUBLISHED_KEY, img, 255, 255, 5)

for row in plane_change_summary(report):
    flag = "  <- lowest changed" if row.lowest else ""
    print(f"plane {row.plane}: {row.count:7d} changed ({row.fraction:.3f}){flag}")
print(f"overall changed fraction: {report.changed_fraction:.3f}")
print("first changed scan index:", report.first_changed, "= permuted position", report.permuted_position)

# %%
# Save each plane as a black/white mask.
out = Path("demo_output")
out.mkdir(exist_ok=True)
for p in range(8):
    write_pgm(report.masks[p].astype("uint8") * 255, out / f"plane{p}.pgm")
