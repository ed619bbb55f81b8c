"""Assembly of per-position feature vectors from the enabled extractors.

Feature groups are named CF, LNG, PKL, PMI, C_POS, DICT, SIM.  CF is the
baseline and always enabled; document-level statistics (LNG/PKL/PMI) are
recomputed per document from its own sentences, so they work on raw input
just as on training data.

The shared feature-dump format: one line per character position with
TAB-separated ``template-id=value`` pairs in registration order, blank
line between sentences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, TextIO

from . import doc_features, external_features
from .char_features import FeatureVector, cf_features, char_types
from .corpus import Document
from .external_features import KnowledgeBase

FEATURE_GROUPS = ("CF", "LNG", "PKL", "PMI", "C_POS", "DICT", "SIM")
EXTERNAL_GROUPS = frozenset({"C_POS", "DICT", "SIM"})


def normalize_groups(groups: Iterable[str]) -> tuple[str, ...]:
    """Validate group names and force the CF baseline on, spec order."""
    requested = set(groups)
    unknown = requested - set(FEATURE_GROUPS)
    if unknown:
        raise ValueError(f"unknown feature groups: {sorted(unknown)}")
    requested.add("CF")
    return tuple(g for g in FEATURE_GROUPS if g in requested)


@dataclass(frozen=True)
class FeatureExtractor:
    """Feature assembly for a fixed group selection and knowledge base."""

    groups: tuple[str, ...]
    knowledge: KnowledgeBase | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "groups", normalize_groups(self.groups))
        if EXTERNAL_GROUPS & set(self.groups) and self.knowledge is None:
            missing = sorted(EXTERNAL_GROUPS & set(self.groups))
            raise ValueError(f"feature groups {missing} need a knowledge base")

    def document_features(self, doc: Document) -> list[list[FeatureVector]]:
        """Per-sentence, per-position feature vectors for one document."""
        groups = set(self.groups)
        lng = doc_features.extract_lng(doc) if "LNG" in groups else None
        pkl_bins = pmi_bins = None
        if "PKL" in groups or "PMI" in groups:
            table = doc_features.TrigramTable.from_document(doc)
            if "PKL" in groups:
                pkl1, pkl2 = doc_features.compute_pkl(doc, table)
                pkl_bins = (
                    doc_features.bin_scores(pkl1, "ascending"),
                    doc_features.bin_scores(pkl2, "ascending"),
                )
            if "PMI" in groups:
                pmi1, pmi2 = doc_features.compute_pmi(doc, table)
                pmi_bins = (
                    doc_features.bin_scores(pmi1, "descending"),
                    doc_features.bin_scores(pmi2, "descending"),
                )

        kb = self.knowledge
        out: list[list[FeatureVector]] = []
        for si, sent in enumerate(doc.sentences):
            types = char_types(sent)
            rows: list[FeatureVector] = []
            for i in range(len(sent)):
                fv: FeatureVector = cf_features(sent, types, i)
                if lng is not None:
                    fv.append(("LNG", doc_features.lng_label(doc, lng, si, i)))
                if pkl_bins is not None:
                    fv.append(("PKL1", _bin_value(pkl_bins[0], si, i)))
                    fv.append(("PKL2", _bin_value(pkl_bins[1], si, i)))
                if pmi_bins is not None:
                    fv.append(("PMI1", _bin_value(pmi_bins[0], si, i)))
                    fv.append(("PMI2", _bin_value(pmi_bins[1], si, i)))
                if "C_POS" in groups:
                    fv.append(("C_POS", external_features.cpos_feature(kb.pos_lexicon, sent[i])))
                if "DICT" in groups:
                    fv.append(("DICT", str(external_features.dict_feature(kb.dictionary, sent, i))))
                if "SIM" in groups:
                    sims = external_features.sim_features(kb.similarity, sent, i)
                    for off, sim in zip(external_features.SIM_OFFSETS, sims):
                        fv.append((f"SIM[{off:+d}]", external_features.discretize_similarity(sim)))
                rows.append(fv)
            out.append(rows)
        return out


def _bin_value(bins: dict, si: int, i: int) -> str:
    bin_id = bins.get((si, i))
    return doc_features.NO_SCORE if bin_id is None else str(bin_id)


def write_feature_dump(fh: TextIO, sentence_features: list[list[FeatureVector]]) -> None:
    """Write feature vectors in the shared dump format."""
    for si, rows in enumerate(sentence_features):
        if si:
            fh.write("\n")
        for fv in rows:
            fh.write("\t".join(f"{t}={v}" for t, v in fv))
            fh.write("\n")
