"""Regenerate the committed test fixtures under tests/fixtures.

Phantom images are synthetic 512x512 grayscale scenes with bright lesions at
known positions. Replay responses mimic the shapes real model output takes
(fenced JSON, prose around JSON, plain JSON), with coordinates a few pixels
off the truth; the *_oob variants push raw coordinates outside the image.

    python tools/make_fixtures.py
"""

import json
import pathlib

import cv2
import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"
SIZE = 512


def noisy(img, seed, sigma=4.0):
    rng = np.random.default_rng(seed)
    out = img.astype(np.float64) + rng.normal(0.0, sigma, img.shape)
    return np.clip(out, 0, 255).astype(np.uint8)


def blob(img, center, axes, angle, value):
    layer = np.zeros_like(img, dtype=np.float64)
    cv2.ellipse(layer, center, axes, angle, 0, 360, float(value), -1, cv2.LINE_AA)
    layer = cv2.GaussianBlur(layer, (0, 0), 2.0)
    return np.clip(img.astype(np.float64) + layer, 0, 255).astype(np.uint8)


def ct_chest():
    img = np.full((SIZE, SIZE), 8, np.uint8)
    cv2.ellipse(img, (256, 260), (220, 170), 0, 0, 360, 110, -1, cv2.LINE_AA)
    cv2.ellipse(img, (170, 250), (70, 110), 8, 0, 360, 35, -1, cv2.LINE_AA)
    cv2.ellipse(img, (342, 250), (70, 110), -8, 0, 360, 35, -1, cv2.LINE_AA)
    cv2.circle(img, (256, 330), 28, 170, -1, cv2.LINE_AA)
    img = blob(img, (180, 220), (14, 14), 0, 150)
    img = blob(img, (352, 300), (10, 8), 30, 140)
    return noisy(img, 11), [(180, 220), (352, 300)]


def mri_brain():
    img = np.full((SIZE, SIZE), 5, np.uint8)
    cv2.ellipse(img, (256, 256), (190, 225), 0, 0, 360, 90, -1, cv2.LINE_AA)
    cv2.ellipse(img, (256, 256), (175, 210), 0, 0, 360, 125, -1, cv2.LINE_AA)
    cv2.ellipse(img, (232, 240), (14, 45), 12, 0, 360, 40, -1, cv2.LINE_AA)
    cv2.ellipse(img, (280, 240), (14, 45), -12, 0, 360, 40, -1, cv2.LINE_AA)
    img = blob(img, (320, 180), (26, 16), 35, 110)
    return noisy(img, 23), [(320, 180)]


def xray_chest():
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    img = 200.0 - 0.25 * np.abs(xx - 256.0)
    img = np.clip(img, 0, 255)
    base = img.astype(np.uint8)
    cv2.ellipse(base, (175, 250), (85, 150), 5, 0, 360, 45, -1, cv2.LINE_AA)
    cv2.ellipse(base, (340, 250), (80, 145), -5, 0, 360, 45, -1, cv2.LINE_AA)
    for k in range(8):
        y = 130 + 32 * k
        cv2.line(base, (95, y), (420, y + 12), 120, 3, cv2.LINE_AA)
    base = blob(base, (150, 360), (22, 18), 0, 120)
    base = blob(base, (330, 160), (12, 12), 0, 110)
    base = blob(base, (400, 300), (9, 14), 0, 100)
    return noisy(base, 37), [(150, 360), (330, 160), (400, 300)]


CT_RESPONSE = """Here is my analysis of the provided CT image.

```json
{
  "examination_type": "CT",
  "anatomical_region": "Chest",
  "findings": [
    {
      "id": 1,
      "label": "Pulmonary nodule",
      "description": "Well-circumscribed round hyperdense nodule in the right upper lung field.",
      "bbox": {"x_min": 160, "y_min": 198, "x_max": 206, "y_max": 244},
      "center": {"x": 183, "y": 221},
      "contour": [{"x": 168, "y": 206}, {"x": 198, "y": 204}, {"x": 206, "y": 228}, {"x": 186, "y": 244}, {"x": 162, "y": 232}],
      "gaussian": {"mu_x": 183, "mu_y": 221, "sigma_x": 11.5, "sigma_y": 11.5, "theta": 0.0},
      "confidence": 8,
      "clinical_significance": "Indeterminate nodule; follow-up CT recommended."
    },
    {
      "id": 2,
      "label": "Small nodular opacity",
      "description": "Faint ovoid opacity in the left lower lung field.",
      "bbox": {"x_min": 336, "y_min": 286, "x_max": 372, "y_max": 318},
      "center": {"x": 354, "y": 302},
      "gaussian": {"mu_x": 354, "mu_y": 302, "sigma_x": 9, "sigma_y": 7, "theta": 0.52},
      "confidence": 5,
      "clinical_significance": "Likely benign; correlate with prior imaging."
    }
  ],
  "overall_impression": "Two pulmonary nodules; the larger right-sided lesion warrants follow-up."
}
```

Let me know if you need further detail."""

MRI_RESPONSE = """Based on the axial MRI slice, I identified one abnormality. The structured result follows:
{"examination_type": "MRI", "anatomical_region": "Brain",
 "findings": [{"id": 1, "label": "Hyperintense lesion", "description": "Ovoid hyperintense focus in the right parietal white matter {no mass effect}.",
   "bbox": [286, 152, 352, 210], "center": [318, 182],
   "gaussian": {"mu_x": 318, "mu_y": 182, "sigma_x": 16, "sigma_y": 10, "theta": 0.61},
   "confidence": "7", "clinical_significance": "Consider demyelinating or ischemic etiology."}],
 "overall_impression": "Solitary right parietal white matter lesion."}
The remaining parenchyma appears unremarkable."""

XRAY_RESPONSE = json.dumps(
    {
        "examination_type": "X-ray",
        "anatomical_region": "Chest",
        "findings": [
            {
                "id": 1,
                "label": "Consolidation",
                "description": "Patchy opacity in the right lower zone.",
                "bbox": {"x_min": 118, "y_min": 330, "x_max": 186, "y_max": 392},
                "center": {"x": 152, "y": 361},
                "gaussian": {"mu_x": 152, "mu_y": 361, "sigma_x": 17, "sigma_y": 15.5, "theta": 0.0},
                "confidence": 9,
                "clinical_significance": "Pneumonia suspected; clinical correlation advised.",
            },
            {
                "id": 2,
                "label": "Nodule",
                "description": "Small rounded density in the left upper zone.",
                "bbox": {"x_min": 312, "y_min": 142, "x_max": 350, "y_max": 180},
                "center": {"x": 331, "y": 161},
                "contour": [[316, 150], [344, 146], [350, 170], [330, 180], [312, 168], [316, 150]],
                "confidence": 4,
                "clinical_significance": "Indeterminate.",
            },
            {
                "id": 3,
                "label": "Opacity",
                "description": "Faint vertical opacity projecting over the left mid zone.",
                "bbox": {"x_min": 388, "y_min": 280, "x_max": 414, "y_max": 322},
                "center": {"x": 401, "y": 301},
                "gaussian": {"mu_x": 401, "mu_y": 301, "sigma_x": 6.5, "sigma_y": 10.5, "theta": 0.0},
                "confidence": 2,
                "clinical_significance": "Possibly overlapping soft tissue.",
            },
        ],
        "overall_impression": "Right lower zone consolidation and two small left-sided opacities.",
    },
    indent=2,
)

# Same scenes, but with raw coordinates pushed outside the image or outside
# the finding's own box, as an unreliable model might emit them.
CT_OOB = json.dumps(
    {
        "examination_type": "CT",
        "anatomical_region": "Chest",
        "findings": [
            {
                "id": 1,
                "label": "Pulmonary nodule",
                "bbox": {"x_min": 160, "y_min": 198, "x_max": 206, "y_max": 244},
                "center": {"x": -140, "y": 221},
                "gaussian": {"mu_x": -140, "mu_y": 221, "sigma_x": 11.5, "sigma_y": 11.5, "theta": 0.0},
                "confidence": 8,
            },
            {
                "id": 2,
                "label": "Small nodular opacity",
                "bbox": {"x_min": 336, "y_min": 286, "x_max": 372, "y_max": 318},
                "center": {"x": 354, "y": 690},
                "confidence": 5,
            },
        ],
        "overall_impression": "Two pulmonary nodules.",
    },
    indent=2,
)

MRI_OOB = json.dumps(
    {
        "examination_type": "MRI",
        "anatomical_region": "Brain",
        "findings": [
            {
                "id": 1,
                "label": "Hyperintense lesion",
                "bbox": [286, 152, 352, 210],
                "center": [610, -75],
                "confidence": 7,
            }
        ],
        "overall_impression": "Solitary lesion.",
    },
    indent=2,
)

XRAY_OOB = json.dumps(
    {
        "examination_type": "X-ray",
        "anatomical_region": "Chest",
        "findings": [
            {
                "id": 1,
                "label": "Consolidation",
                "bbox": {"x_min": 118, "y_min": 330, "x_max": 186, "y_max": 392},
                "center": {"x": 152, "y": 1200},
                "confidence": 9,
            },
            {
                "id": 2,
                "label": "Nodule",
                "bbox": {"x_min": 312, "y_min": 142, "x_max": 350, "y_max": 180},
                "center": {"x": 331, "y": 161},
                "confidence": 4,
            },
            {
                "id": 3,
                "label": "Opacity",
                "bbox": {"x_min": 388, "y_min": 280, "x_max": 540, "y_max": 322},
                "center": {"x": 700, "y": 301},
                "confidence": 2,
            },
        ],
        "overall_impression": "Right lower zone consolidation.",
    },
    indent=2,
)


def main():
    images = ROOT / "images"
    replay = ROOT / "replay"
    images.mkdir(parents=True, exist_ok=True)
    replay.mkdir(parents=True, exist_ok=True)

    scenes = {
        "phantom_ct_chest": (ct_chest, CT_RESPONSE, CT_OOB),
        "phantom_mri_brain": (mri_brain, MRI_RESPONSE, MRI_OOB),
        "phantom_xray_chest": (xray_chest, XRAY_RESPONSE, XRAY_OOB),
    }
    manifest = []
    for stem, (make, response, oob) in scenes.items():
        img, centers = make()
        cv2.imwrite(str(images / f"{stem}.png"), img)
        (replay / f"{stem}.txt").write_text(response + "\n")
        (replay / f"{stem}_oob.txt").write_text(oob + "\n")
        truth = {"centers": [list(c) for c in centers], "max_mean_deviation": 80.0}
        (replay / f"{stem}.truth.json").write_text(json.dumps(truth, indent=2) + "\n")
        manifest.append(
            {
                "image": f"images/{stem}.png",
                "fixture": f"replay/{stem}.txt",
                "perturbed": f"replay/{stem}_oob.txt",
                "truth": f"replay/{stem}.truth.json",
            }
        )
    (replay / "unparseable.txt").write_text(
        "I'm sorry, but I can't provide a structured analysis of this image.\n"
    )
    (ROOT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
