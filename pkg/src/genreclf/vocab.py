"""The fixed 21-genre label vocabulary. Order matters: label vectors,
reports and checkpoints all follow this ordering."""

import numpy as np

GENRES = (
    "Action", "Adventure", "Animation", "Biography", "Comedy", "Crime",
    "Documentary", "Drama", "Family", "Fantasy", "History", "Horror",
    "Music", "Musical", "Mystery", "Romance", "Sci-Fi", "Sport",
    "Thriller", "War", "Western",
)

GENRE_INDEX = {name: i for i, name in enumerate(GENRES)}

NUM_GENRES = len(GENRES)


def label_vector(genres) -> np.ndarray:
    """One-hot multi-label vector over the fixed vocabulary. Genre names are
    matched case-sensitively; unknown names are ignored by the caller's
    manifest loader before reaching here."""
    vec = np.zeros(NUM_GENRES, dtype=np.float32)
    for g in genres:
        vec[GENRE_INDEX[g]] = 1.0
    return vec
