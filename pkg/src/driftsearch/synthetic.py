"""Deterministic synthetic newsgroup-style corpus.

Writes the standard dataset layout (one directory per group, one file per
message) so the loader and the simulation can run without the real
archive.  Group structure is distributed rather than marker-based: all
groups draw from one pool of mid-frequency terms, and each group boosts
the presence of its own sparse subset of that pool.  Documents activate
only part of their group's boosted subset, so groups are learnable in
aggregate while single documents stay ambiguous; retrieval quality then
improves gradually over a feedback session instead of saturating.
Ubiquitous filler terms (document frequency above the max-df threshold)
and per-document rare words (below min-df) decorate every message so the
frequency thresholds are exercised from both sides.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

GROUP_NAMES = (
    "alt.atheism", "comp.graphics", "comp.os.ms-windows.misc",
    "comp.sys.ibm.pc.hardware", "comp.sys.mac.hardware", "comp.windows.x",
    "misc.forsale", "rec.autos", "rec.motorcycles", "rec.sport.baseball",
    "rec.sport.hockey", "sci.crypt", "sci.electronics", "sci.med",
    "sci.space", "soc.religion.christian", "talk.politics.guns",
    "talk.politics.mideast", "talk.politics.misc", "talk.religion.misc",
)

_SYLLABLES = (
    "ba be bi bo bu da de di do du fa fe fi fo fu ga ge gi go gu "
    "ka ke ki ko ku la le li lo lu ma me mi mo mu na ne ni no nu "
    "pa pe pi po pu ra re ri ro ru sa se si so su ta te ti to tu "
    "va ve vi vo vu za ze zi zo zu"
).split()


def _word_pool(rng: np.random.Generator, count: int, syllables: int) -> list[str]:
    pool: list[str] = []
    seen = set()
    while len(pool) < count:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(syllables))
        if word not in seen:
            seen.add(word)
            pool.append(word)
    return pool


def generate_synthetic_newsgroups(
    out_dir: str | Path,
    groups: int = 20,
    per_group: int = 100,
    seed: int = 0,
    pool_terms: int = 320,
    boosted_per_group: int = 26,
    boost: float = 3.6,
    doc_activation: float = 0.6,
    base_df_low: float = 0.05,
    base_df_high: float = 0.14,
    burst: float = 0.8,
    boosted_burst: float | None = None,
    presence_cap: float = 0.5,
    neighbor_overlap: int = 0,
    cluster_size: int = 1,
    cluster_core_terms: int = 0,
    twin_rate: float = 0.0,
    strong_fraction: float = 1.0,
    weak_activation: float = 0.0,
    rare_words_per_doc: int = 18,
) -> Path:
    """Write the corpus and return its root directory."""
    rng = np.random.default_rng(seed)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    pool = _word_pool(rng, pool_terms, 3)
    base_df = rng.uniform(base_df_low, base_df_high, size=pool_terms)
    # Overlapping signatures make related groups confusable, like the
    # topic clusters of real newsgroups.  Cluster mode shares a core set
    # among cluster members; chain mode shares terms with the previous
    # group.
    boosted_sets: list[np.ndarray] = []
    if cluster_size > 1 and cluster_core_terms > 0:
        unique_k = boosted_per_group - cluster_core_terms
        cores = [
            rng.choice(pool_terms, size=cluster_core_terms, replace=False)
            for _ in range((groups + cluster_size - 1) // cluster_size)
        ]
        for g in range(groups):
            core = cores[g // cluster_size]
            rest_pool = np.setdiff1d(np.arange(pool_terms), core)
            unique = rng.choice(rest_pool, size=unique_k, replace=False)
            boosted_sets.append(np.concatenate([core, unique]))
    else:
        for g in range(groups):
            if g == 0 or neighbor_overlap == 0:
                boosted_sets.append(rng.choice(pool_terms, size=boosted_per_group, replace=False))
                continue
            shared = rng.choice(boosted_sets[g - 1], size=neighbor_overlap, replace=False)
            rest_pool = np.setdiff1d(np.arange(pool_terms), shared)
            rest = rng.choice(rest_pool, size=boosted_per_group - neighbor_overlap, replace=False)
            boosted_sets.append(np.concatenate([shared, rest]))
    common = _word_pool(rng, 12, 2)  # df driven above max-df, always filtered
    rare_pool = _word_pool(rng, max(4000, rare_words_per_doc * 40), 5)

    group_names = list(GROUP_NAMES[:groups])
    while len(group_names) < groups:
        group_names.append(f"synth.group{len(group_names)}")

    for g, name in enumerate(group_names):
        gdir = root / name
        gdir.mkdir(parents=True, exist_ok=True)
        for d in range(per_group):
            # Content twins: like cross-posted messages, some documents
            # carry another group's content under this group's label,
            # capping achievable retrieval quality below the F1 ceiling.
            content_group = g
            if groups > 1 and rng.random() < twin_rate:
                content_group = int((g + 1 + rng.integers(groups - 1)) % groups)
            boosted = boosted_sets[content_group]
            presence = base_df.copy()
            # Weak documents carry little or none of their group's
            # signature; they bound achievable recall without ever
            # reaching the result list.
            activation = doc_activation if rng.random() < strong_fraction else weak_activation
            # Each document activates only part of its group's signature.
            active = boosted[rng.random(boosted.size) < activation]
            presence[active] = np.minimum(presence[active] * boost, presence_cap)
            keep = rng.random(pool_terms) < presence
            active_set = set(active.tolist())
            hi_burst = burst if boosted_burst is None else boosted_burst
            tokens: list[str] = []
            for idx in np.flatnonzero(keep):
                rate = hi_burst if idx in active_set else burst
                tokens += [pool[idx]] * (1 + rng.poisson(rate))
            for term in common:
                if rng.random() < 0.55:
                    tokens += [term] * (1 + rng.poisson(2.0))
            tokens += list(rng.choice(rare_pool, size=rare_words_per_doc, replace=False))
            order = rng.permutation(len(tokens))
            body = " ".join(np.asarray(tokens, dtype=object)[order])
            lines = ["subject: " + " ".join(tokens[:3])]
            words = body.split()
            lines += [" ".join(words[i:i + 12]) for i in range(0, len(words), 12)]
            (gdir / f"msg{g:02d}{d:05d}.txt").write_text("\n".join(lines), encoding="utf-8")
    assert sum(1 for _ in root.rglob("msg*.txt")) == groups * per_group
    return root
