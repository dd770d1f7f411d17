"""Group-based keypoint removal (GKR) augmentation plans.

Planning and pixel application are split so a plan is a reviewable,
replayable artifact: for each annotated person, each keypoint group
independently survives with probability ``keep_prob``; a group that does not
survive has one of its labeled keypoints erased under a noise rectangle
whose side scales with the image. Plans serialize to JSONL; applying a plan
touches only the planned rectangles, every other pixel byte stays identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .grouping import Grouping
from .rng import generator, mix64
from .skeleton import KeypointSchema


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class PersonAnnotation:
    """One annotated person: (x, y, visibility) per keypoint plus image info."""

    image_id: int
    annotation_id: int
    file_name: str
    width: int
    height: int
    keypoints: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DataError(f"bad image size {self.width}x{self.height}")
        for idx, (x, y, v) in enumerate(self.keypoints):
            if v not in (0, 1, 2):
                raise DataError(
                    f"annotation {self.annotation_id}: keypoint {idx} has "
                    f"visibility {v}, expected 0, 1 or 2"
                )
            if v > 0 and not (0 <= x < self.width and 0 <= y < self.height):
                raise DataError(
                    f"annotation {self.annotation_id}: labeled keypoint {idx} at "
                    f"({x}, {y}) outside {self.width}x{self.height}",
                    code="out-of-bounds",
                )

    def visible_count(self) -> int:
        return sum(1 for _, _, v in self.keypoints if v > 0)


def parse_annotations(source, schema: KeypointSchema) -> list[PersonAnnotation]:
    """Read a COCO-style person keypoints document (dict or path)."""
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except OSError as e:
            raise DataError(f"cannot read annotations {source}: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"annotations {source}: invalid JSON: {e}") from e
    else:
        doc = source
    if not isinstance(doc, dict) or "images" not in doc or "annotations" not in doc:
        raise DataError("annotations document must have 'images' and 'annotations'")
    images = {}
    for img in doc["images"]:
        try:
            images[img["id"]] = (img["file_name"], int(img["width"]), int(img["height"]))
        except (KeyError, TypeError) as e:
            raise DataError(f"bad images entry {img!r}: {e}") from e
    persons = []
    n = schema.n
    for ann in doc["annotations"]:
        try:
            image_id = ann["image_id"]
            ann_id = ann["id"]
            flat = list(ann["keypoints"])
        except (KeyError, TypeError) as e:
            raise DataError(f"bad annotation entry: {e}") from e
        if image_id not in images:
            raise DataError(
                f"annotation {ann_id} references unknown image_id {image_id}",
                code="dangling-image",
            )
        if len(flat) != 3 * n:
            raise DataError(
                f"annotation {ann_id}: keypoint array length {len(flat)}, expected {3 * n}"
            )
        file_name, width, height = images[image_id]
        kps = tuple(
            (float(flat[3 * i]), float(flat[3 * i + 1]), int(flat[3 * i + 2]))
            for i in range(n)
        )
        persons.append(
            PersonAnnotation(image_id, ann_id, file_name, width, height, kps)
        )
    return persons


@dataclass(frozen=True)
class GkrConfig:
    """keep_prob is the SURVIVAL threshold: a group is erased when its
    uniform draw exceeds keep_prob, i.e. with probability 1 - keep_prob."""

    keep_prob: float
    scales: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.keep_prob <= 1.0:
            raise DataError(f"keep_prob must be in [0, 1], got {self.keep_prob}")
        if not self.scales:
            raise DataError("need at least one scale")
        for s in self.scales:
            if not 0.0 < s <= 1.0:
                raise DataError(f"scales must be in (0, 1], got {s}")


def default_scales(
    grouping: Grouping,
    schema: KeypointSchema,
    head_scale: float = 0.05,
    other_scale: float = 0.15,
) -> tuple[float, ...]:
    """Small rectangles for the face group, larger elsewhere."""
    try:
        nose_group = grouping.group_of(schema.index_of("nose"))
    except Exception:
        nose_group = -1
    return tuple(
        head_scale if k == nose_group else other_scale for k in range(grouping.g)
    )


@dataclass(frozen=True)
class EraseRect:
    """One planned rectangle; group < 0 marks a grouping-blind baseline draw."""

    group: int
    keypoint: int
    rect: tuple[int, int, int, int]
    fill_seed: int


@dataclass(frozen=True)
class ErasePlan:
    image_id: int
    annotation_id: int
    file_name: str
    width: int
    height: int
    rects: tuple[EraseRect, ...]

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "annotation_id": self.annotation_id,
            "file_name": self.file_name,
            "width": self.width,
            "height": self.height,
            "rects": [
                {
                    "group": r.group,
                    "keypoint": r.keypoint,
                    "rect": list(r.rect),
                    "fill_seed": r.fill_seed,
                }
                for r in self.rects
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ErasePlan":
        try:
            rects = tuple(
                EraseRect(
                    int(r["group"]),
                    int(r["keypoint"]),
                    tuple(int(v) for v in r["rect"]),
                    int(r["fill_seed"]),
                )
                for r in doc["rects"]
            )
            return cls(
                doc["image_id"],
                doc["annotation_id"],
                str(doc["file_name"]),
                int(doc["width"]),
                int(doc["height"]),
                rects,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"bad erase plan record: {e}") from e


def _centered_rect(
    x: float, y: float, w: int, h: int, width: int, height: int
) -> tuple[int, int, int, int]:
    x0 = min(max(_round_half_up(x - w / 2), 0), width - 1)
    y0 = min(max(_round_half_up(y - h / 2), 0), height - 1)
    return (x0, y0, min(x0 + w, width), min(y0 + h, height))


def plan_gkr(person: PersonAnnotation, grouping: Grouping, cfg: GkrConfig) -> ErasePlan:
    """One erase plan for one person.

    Survival draws are the first g uniforms of one stream keyed by cfg.seed,
    so which groups survive never depends on visibility; the keypoint pick
    inside an erased group uses its own per-group stream. The plan is a pure
    function of (person, grouping, cfg).
    """
    n = len(person.keypoints)
    if grouping.n != n:
        raise DataError(f"grouping over n={grouping.n}, annotation has {n} keypoints")
    if len(cfg.scales) != grouping.g:
        raise DataError(
            f"{len(cfg.scales)} scales for {grouping.g} groups", code="bad-scales"
        )
    survival = generator("gkr-plan", cfg.seed).random(grouping.g)
    rects = []
    for k, members in enumerate(grouping.groups):
        if float(survival[k]) <= cfg.keep_prob:
            continue
        labeled = [j for j in members if person.keypoints[j][2] > 0]
        if not labeled:
            continue
        pick = labeled[int(generator("gkr-pick", cfg.seed, k).integers(len(labeled)))]
        x, y, _ = person.keypoints[pick]
        w = max(1, _round_half_up(person.width * cfg.scales[k]))
        h = max(1, _round_half_up(person.height * cfg.scales[k]))
        rects.append(
            EraseRect(
                group=k,
                keypoint=pick,
                rect=_centered_rect(x, y, w, h, person.width, person.height),
                fill_seed=mix64("gkr-fill-seed", cfg.seed, k),
            )
        )
    return ErasePlan(
        person.image_id,
        person.annotation_id,
        person.file_name,
        person.width,
        person.height,
        tuple(rects),
    )


@dataclass(frozen=True)
class ReConfig:
    """Grouping-blind random-erasing baseline: at most one rectangle."""

    keep_prob: float
    scale: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.keep_prob <= 1.0:
            raise DataError(f"keep_prob must be in [0, 1], got {self.keep_prob}")
        if not 0.0 < self.scale <= 1.0:
            raise DataError(f"scale must be in (0, 1], got {self.scale}")


def plan_random_erasing(person: PersonAnnotation, cfg: ReConfig) -> ErasePlan:
    """Comparison baseline: ignores groups, erases one labeled keypoint."""
    rects = ()
    u = float(generator("re-plan", cfg.seed).random())
    if u > cfg.keep_prob:
        labeled = [j for j, (_, _, v) in enumerate(person.keypoints) if v > 0]
        if labeled:
            pick = labeled[int(generator("re-pick", cfg.seed).integers(len(labeled)))]
            x, y, _ = person.keypoints[pick]
            w = max(1, _round_half_up(person.width * cfg.scale))
            h = max(1, _round_half_up(person.height * cfg.scale))
            rects = (
                EraseRect(
                    group=-1,
                    keypoint=pick,
                    rect=_centered_rect(x, y, w, h, person.width, person.height),
                    fill_seed=mix64("re-fill-seed", cfg.seed),
                ),
            )
    return ErasePlan(
        person.image_id,
        person.annotation_id,
        person.file_name,
        person.width,
        person.height,
        rects,
    )


def apply_plan(image: np.ndarray, plan: ErasePlan) -> np.ndarray:
    """Fill the planned rectangles with seeded uniform byte noise."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise DataError(f"expected uint8 HxWx3 image, got {arr.dtype} {arr.shape}")
    h_img, w_img, _ = arr.shape
    if (w_img, h_img) != (plan.width, plan.height):
        raise DataError(
            f"image is {w_img}x{h_img}, plan expects {plan.width}x{plan.height}"
        )
    out = arr.copy()
    for r in plan.rects:
        x0, y0, x1, y1 = r.rect
        if not (0 <= x0 < x1 <= w_img and 0 <= y0 < y1 <= h_img):
            raise DataError(f"rect {r.rect} outside {w_img}x{h_img}", code="out-of-bounds")
        fill = generator("gkr-fill", r.fill_seed).integers(
            0, 256, size=(y1 - y0, x1 - x0, 3), dtype=np.uint8
        )
        out[y0:y1, x0:x1] = fill
    return out


def write_plans(path, plans) -> None:
    with open(path, "w") as f:
        for plan in plans:
            f.write(json.dumps(plan.to_json_dict(), sort_keys=True, separators=(",", ":")))
            f.write("\n")


def read_plans(path) -> list[ErasePlan]:
    plans = []
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    plans.append(ErasePlan.from_json_dict(json.loads(line)))
                except json.JSONDecodeError as e:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {e}") from None
    except OSError as e:
        raise DataError(f"cannot read plans {path}: {e}") from e
    return plans


OCCLUSION_BUCKETS = (0.0, 0.25, 0.5, 0.75)


def occlusion_ratio(persons) -> float:
    """Share of invisible keypoints over all persons (of one image)."""
    persons = list(persons)
    if not persons:
        raise DataError("no annotations to rate")
    total = sum(len(p.keypoints) for p in persons)
    invisible = sum(
        sum(1 for _, _, v in p.keypoints if v == 0) for p in persons
    )
    return invisible / total


def bucket_for(ratio: float) -> float:
    """Lower edge of the occlusion bucket: [0,.25), [.25,.5), [.5,.75), [.75,1]."""
    if not 0.0 <= ratio <= 1.0:
        raise DataError(f"occlusion ratio {ratio} outside [0, 1]")
    for edge in reversed(OCCLUSION_BUCKETS):
        if ratio >= edge:
            return edge
    return 0.0


def occlusion_stats(persons) -> dict:
    """Bucketed per-image occlusion summary; deterministic partition."""
    by_image: dict = {}
    for p in persons:
        by_image.setdefault(p.image_id, []).append(p)
    ratios = {img: occlusion_ratio(group) for img, group in sorted(by_image.items())}
    buckets = {edge: 0 for edge in OCCLUSION_BUCKETS}
    for ratio in ratios.values():
        buckets[bucket_for(ratio)] += 1
    return {
        "images": len(ratios),
        "persons": sum(len(v) for v in by_image.values()),
        "buckets": {format(edge, "g"): buckets[edge] for edge in OCCLUSION_BUCKETS},
        "ratios": {str(img): ratios[img] for img in ratios},
    }
