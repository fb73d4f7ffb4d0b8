"""Rating matrices, item catalogs, replay logs and holdout splits."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from banditmf.errors import DatasetError

MOVIELENS_SCHEMA = {"user": "userId", "item": "movieId", "rating": "rating"}


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RatingMatrix:
    """Sparse observed ratings over a fixed ``num_users x num_items`` index space.

    ``users``, ``items`` and ``ratings`` are parallel read-only arrays, one
    element per observed pair. ``user_ids``/``item_ids`` map dense indices back
    to external ids (empty tuples when the matrix was not built from ids).
    """

    num_users: int
    num_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    rating_max: float
    user_ids: tuple = ()
    item_ids: tuple = ()

    def __post_init__(self):
        users = _frozen(self.users, np.int64)
        items = _frozen(self.items, np.int64)
        ratings = _frozen(self.ratings, np.float64)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        object.__setattr__(self, "rating_max", float(self.rating_max))

        if not (users.shape == items.shape == ratings.shape) or users.ndim != 1:
            raise DatasetError("users, items and ratings must be parallel 1-d arrays")
        if self.num_users < 0 or self.num_items < 0:
            raise DatasetError("index space sizes must be non-negative")
        if len(users):
            if users.min() < 0 or users.max() >= self.num_users:
                raise DatasetError("user index out of range")
            if items.min() < 0 or items.max() >= self.num_items:
                raise DatasetError("item index out of range")
            if not np.all(np.isfinite(ratings)):
                raise DatasetError("ratings must be finite")
            keys = users * max(self.num_items, 1) + items
            if len(np.unique(keys)) != len(keys):
                raise DatasetError("duplicate (user, item) pair")
            if ratings.max() > self.rating_max:
                raise DatasetError(
                    f"rating_max {self.rating_max} below observed maximum {ratings.max()}"
                )
        if not self.rating_max > 0:
            raise DatasetError("rating_max must be positive")
        if self.user_ids and len(self.user_ids) != self.num_users:
            raise DatasetError("user_ids length does not match num_users")
        if self.item_ids and len(self.item_ids) != self.num_items:
            raise DatasetError("item_ids length does not match num_items")

    @classmethod
    def from_entries(
        cls,
        entries: Iterable[tuple[int, int, float]],
        num_users: int,
        num_items: int,
        rating_max: float | None = None,
        user_ids: Sequence = (),
        item_ids: Sequence = (),
    ) -> "RatingMatrix":
        rows = list(entries)
        users = [int(u) for u, _, _ in rows]
        items = [int(i) for _, i, _ in rows]
        ratings = [float(r) for _, _, r in rows]
        if rating_max is None:
            rating_max = max(ratings) if ratings else 1.0
        return cls(num_users, num_items, users, items, ratings, rating_max, tuple(user_ids), tuple(item_ids))

    def __len__(self) -> int:
        return len(self.ratings)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_users, self.num_items)

    def entries(self) -> set[tuple[int, int, float]]:
        return {(int(u), int(i), float(r)) for u, i, r in zip(self.users, self.items, self.ratings)}

    def external_entries(self) -> set[tuple[str, str, float]]:
        uid = self.user_ids or tuple(str(u) for u in range(self.num_users))
        iid = self.item_ids or tuple(str(i) for i in range(self.num_items))
        return {(str(uid[u]), str(iid[i]), float(r)) for u, i, r in zip(self.users, self.items, self.ratings)}

    def mean(self) -> float:
        if not len(self):
            raise DatasetError("no ratings")
        return float(self.ratings.mean())

    def to_dense(self, fill: float = np.nan) -> np.ndarray:
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.users, self.items] = self.ratings
        return out

    def user_ratings(self, user: int) -> dict[int, float]:
        mask = self.users == user
        return dict(zip(self.items[mask].tolist(), self.ratings[mask].tolist()))

    def subset(self, index: np.ndarray) -> "RatingMatrix":
        """Entries at positions ``index`` over the same index space."""
        index = np.asarray(index, dtype=np.int64)
        return RatingMatrix(
            self.num_users,
            self.num_items,
            self.users[index],
            self.items[index],
            self.ratings[index],
            self.rating_max,
            self.user_ids,
            self.item_ids,
        )


@dataclass(frozen=True)
class ItemCatalog:
    """External id and title for each item index of a rating matrix."""

    external_ids: tuple
    titles: tuple

    def __post_init__(self):
        if len(self.external_ids) != len(self.titles):
            raise DatasetError("catalog ids and titles differ in length")
        if len(set(self.external_ids)) != len(self.external_ids):
            raise DatasetError("catalog external ids are not unique")

    def __len__(self) -> int:
        return len(self.external_ids)

    @classmethod
    def for_matrix(cls, matrix: RatingMatrix, titles: Mapping[str, str] | None = None) -> "ItemCatalog":
        ids = matrix.item_ids or tuple(str(i) for i in range(matrix.num_items))
        titles = titles or {}
        return cls(tuple(str(x) for x in ids), tuple(titles.get(str(x), "") for x in ids))

    def resolve(self, key) -> int:
        """Item index for an external id or a title.

        Titles match exactly first, then case-insensitively with a trailing
        ``" (YYYY)"`` stripped, so ``"Heat"`` finds ``"Heat (1995)"``.
        """
        key = str(key).strip()
        if key in self._id_index:
            return self._id_index[key]
        hits = [i for i, t in enumerate(self.titles) if t == key]
        if not hits:
            norm = _normalize_title(key)
            hits = [i for i, t in enumerate(self.titles) if t and _normalize_title(t) == norm]
        if not hits:
            raise DatasetError(f"item {key!r} does not resolve against the catalog")
        if len(hits) > 1:
            found = ", ".join(repr(self.titles[i]) for i in hits[:5])
            raise DatasetError(f"item {key!r} is ambiguous: {found}")
        return hits[0]

    @property
    def _id_index(self) -> dict:
        cache = self.__dict__.get("_id_cache")
        if cache is None:
            cache = {x: i for i, x in enumerate(self.external_ids)}
            object.__setattr__(self, "_id_cache", cache)
        return cache


_YEAR = re.compile(r"\s*\(\d{4}\)\s*$")


def _normalize_title(title: str) -> str:
    return _YEAR.sub("", title).strip().casefold()


@dataclass(frozen=True, eq=False)
class ReplayLog:
    """Logged bandit events: action, binary reward and a shared context per row."""

    actions: np.ndarray
    rewards: np.ndarray
    contexts: np.ndarray

    def __post_init__(self):
        actions = _frozen(self.actions, np.int64)
        rewards = _frozen(self.rewards, np.int64)
        contexts = np.array(self.contexts, dtype=np.float64, copy=True)
        if contexts.ndim == 1 and contexts.size == 0:
            contexts = contexts.reshape(0, 0)
        contexts.flags.writeable = False
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "contexts", contexts)
        if contexts.ndim != 2 or not (len(actions) == len(rewards) == contexts.shape[0]):
            raise DatasetError("replay log arrays are not aligned")
        if len(actions) and actions.min() < 0:
            raise DatasetError("logged action must be non-negative")
        if np.any((rewards != 0) & (rewards != 1)):
            raise DatasetError("logged reward must be 0 or 1")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    @property
    def num_actions(self) -> int:
        return int(self.actions.max()) + 1 if len(self) else 0


@dataclass(frozen=True)
class TargetUserInput:
    """A new user's ratings keyed by title or external item id."""

    ratings: tuple = field(default_factory=tuple)

    def resolve(self, catalog: ItemCatalog, rating_max: float) -> list[tuple[int, float]]:
        out: dict[int, float] = {}
        for key, rating in self.ratings:
            rating = float(rating)
            if not 0 <= rating <= rating_max:
                raise DatasetError(f"target rating {rating} outside [0, {rating_max}]")
            idx = catalog.resolve(key)
            if idx in out:
                raise DatasetError(f"target item {key!r} listed twice")
            out[idx] = rating
        return list(out.items())


def load_ratings_csv(
    path,
    schema: Mapping[str, str] = MOVIELENS_SCHEMA,
    rating_max: float | None = None,
) -> RatingMatrix:
    """Read a ``userId,movieId,rating[,timestamp]`` file.

    Users and items are densified in order of first appearance. Duplicate
    pairs and malformed rows raise :class:`DatasetError` naming the line.
    """
    path = Path(path)
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users, items, ratings = [], [], []
    seen: set[tuple[int, int]] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in (schema["user"], schema["item"], schema["rating"]) if c not in (reader.fieldnames or [])]
        if missing:
            raise DatasetError(f"{path}: missing column(s) {missing}")
        for row in reader:
            line = reader.line_num
            try:
                uid = row[schema["user"]].strip()
                iid = row[schema["item"]].strip()
                rating = float(row[schema["rating"]])
            except (TypeError, ValueError, AttributeError) as exc:
                raise DatasetError(f"{path}: malformed row at line {line}: {exc}") from None
            if not uid or not iid or not math.isfinite(rating):
                raise DatasetError(f"{path}: malformed row at line {line}")
            u = user_index.setdefault(uid, len(user_index))
            i = item_index.setdefault(iid, len(item_index))
            if (u, i) in seen:
                raise DatasetError(f"{path}: duplicate rating for user {uid}, item {iid} at line {line}")
            seen.add((u, i))
            users.append(u)
            items.append(i)
            ratings.append(rating)
    if not ratings:
        raise DatasetError(f"{path}: no ratings")
    if rating_max is None:
        rating_max = max(ratings)
    return RatingMatrix(
        len(user_index), len(item_index), users, items, ratings, rating_max,
        tuple(user_index), tuple(item_index),
    )


def write_ratings_csv(matrix: RatingMatrix, path) -> None:
    uid = matrix.user_ids or tuple(str(u) for u in range(matrix.num_users))
    iid = matrix.item_ids or tuple(str(i) for i in range(matrix.num_items))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["userId", "movieId", "rating"])
        for u, i, r in zip(matrix.users, matrix.items, matrix.ratings):
            w.writerow([uid[u], iid[i], repr(float(r))])


def write_id_maps(matrix: RatingMatrix, directory) -> tuple[Path, Path]:
    """Sidecar files mapping dense indices back to external ids."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    users_path, items_path = directory / "users.csv", directory / "items.csv"
    uid = matrix.user_ids or tuple(str(u) for u in range(matrix.num_users))
    iid = matrix.item_ids or tuple(str(i) for i in range(matrix.num_items))
    for target, header, ids in ((users_path, "userId", uid), (items_path, "movieId", iid)):
        with target.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", header])
            w.writerows(enumerate(ids))
    return users_path, items_path


def load_movies_csv(path) -> dict[str, str]:
    """``movieId -> title`` from a MovieLens ``movies.csv``."""
    out: dict[str, str] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "movieId" not in reader.fieldnames or "title" not in reader.fieldnames:
            raise DatasetError(f"{path}: expected movieId and title columns")
        for row in reader:
            mid = row["movieId"].strip()
            if mid in out:
                raise DatasetError(f"{path}: duplicate movieId {mid} at line {reader.line_num}")
            out[mid] = row["title"]
    return out


def load_target_csv(path) -> TargetUserInput:
    """Target user ratings from a CSV with ``title,rating`` or ``movieId,rating``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        key = "title" if "title" in fields else "movieId" if "movieId" in fields else None
        if key is None or "rating" not in fields:
            raise DatasetError(f"{path}: expected title (or movieId) and rating columns")
        rows = []
        for row in reader:
            try:
                rows.append((row[key], float(row["rating"])))
            except (TypeError, ValueError):
                raise DatasetError(f"{path}: malformed row at line {reader.line_num}") from None
    return TargetUserInput(tuple(rows))


def _split_numeric(line: str) -> list[str]:
    return line.replace(",", " ").split()


def load_dense_matrix(path, rating_max: float | None = None) -> RatingMatrix:
    """Read a rectangular numeric grid; zero cells are missing, not ratings of 0."""
    grid = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            cells = _split_numeric(line)
            if not cells:
                continue
            try:
                row = [float(c) for c in cells]
            except ValueError:
                raise DatasetError(f"{path}: non-numeric value at line {lineno}") from None
            if grid and len(row) != len(grid[0]):
                raise DatasetError(f"{path}: ragged row at line {lineno} ({len(row)} != {len(grid[0])} columns)")
            grid.append(row)
    return dense_to_matrix(np.array(grid, dtype=np.float64).reshape(len(grid), -1), rating_max)


def dense_to_matrix(grid: np.ndarray, rating_max: float | None = None) -> RatingMatrix:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise DatasetError("dense matrix must be 2-d")
    users, items = np.nonzero(grid)
    ratings = grid[users, items]
    if rating_max is None:
        rating_max = float(ratings.max()) if len(ratings) else 1.0
    return RatingMatrix(grid.shape[0], grid.shape[1], users, items, ratings, rating_max)


def write_dense_matrix(grid: np.ndarray, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in np.asarray(grid, dtype=np.float64):
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_replay_log(path, action_base: int = 0) -> ReplayLog:
    """Whitespace-separated rows: action, reward, then ``d`` context values.

    ``action_base`` is subtracted from every logged action (1 for files that
    number arms from one).
    """
    actions, rewards, contexts = [], [], []
    width = None
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            cells = _split_numeric(line)
            if not cells:
                continue
            if len(cells) < 2:
                raise DatasetError(f"{path}: line {lineno} has no reward column")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DatasetError(
                    f"{path}: line {lineno} has {len(cells) - 2} features, expected {width - 2}"
                )
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise DatasetError(f"{path}: non-numeric value at line {lineno}") from None
            action, reward = values[0], values[1]
            if action != int(action) or int(action) - action_base < 0:
                raise DatasetError(f"{path}: invalid action {cells[0]!r} at line {lineno}")
            if reward not in (0.0, 1.0):
                raise DatasetError(f"{path}: reward {cells[1]!r} at line {lineno} is not 0 or 1")
            actions.append(int(action) - action_base)
            rewards.append(int(reward))
            contexts.append(values[2:])
    d = (width - 2) if width is not None else 0
    return ReplayLog(actions, rewards, np.array(contexts, dtype=np.float64).reshape(len(actions), d))


def write_replay_log(log: ReplayLog, path, action_base: int = 0) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for a, y, x in zip(log.actions, log.rewards, log.contexts):
            fh.write(" ".join([str(int(a) + action_base), str(int(y))] + [repr(float(v)) for v in x]) + "\n")


def split_holdout(matrix: RatingMatrix, fraction: float, seed: int) -> tuple[RatingMatrix, RatingMatrix]:
    """Random train/test partition of the observed entries.

    The test side receives ``floor(fraction * n)`` entries; both sides keep
    the original index spaces and entry order.
    """
    n = len(matrix)
    if n < 2:
        raise DatasetError("need at least 2 ratings to split")
    if not 0 < fraction < 1:
        raise DatasetError("fraction must lie in (0, 1)")
    n_test = math.floor(fraction * n)
    if n_test == 0 or n_test == n:
        raise DatasetError(f"fraction {fraction} leaves one side of a {n}-entry split empty")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return matrix.subset(train_idx), matrix.subset(test_idx)
