"""Training regimes over a source corpus S and a target corpus T.

Four modes: ``target`` trains on T alone; ``all`` concatenates S and T;
``transit`` first trains a model on S, labels T with it, and feeds the
predicted label at each position to the target model as one extra
feature; ``easy`` expands every feature into a common copy and a
domain-specific copy, so shared regularities and domain-specific ones
get separate weights.

The easy expansion triples the feature space conceptually: a source
vector x becomes <x, x, 0> and a target vector <x, 0, x>.  In the sparse
entry representation the zero block simply has no entries.
"""

from __future__ import annotations

from typing import Sequence

from .char_features import FeatureVector
from .corpus import Document, encode_bmes
from .crf import CrfModel, TrainConfig, TrainingInstance, train
from .pipeline import FeatureExtractor

MODES = ("target", "all", "transit", "easy")

COMMON_PREFIX = "COM"
SOURCE_DOMAIN = "source"
TARGET_DOMAIN = "target"
TRANSIT_TEMPLATE = "TRANSIT"


class ConfigError(ValueError):
    """A training mode is missing one of its required inputs."""


def augment(fv: FeatureVector, domain: str) -> FeatureVector:
    """Expand each entry into its common and domain-specific copies."""
    if domain not in (SOURCE_DOMAIN, TARGET_DOMAIN):
        raise ValueError(f"unknown domain {domain!r}")
    out: FeatureVector = []
    for template_id, value in fv:
        out.append((f"{COMMON_PREFIX}:{template_id}", value))
        out.append((f"{domain}:{template_id}", value))
    return out


def dense_augmentation(values: Sequence[str], domain: str) -> list[str]:
    """Materialize the augmented vector over the tripled feature space.

    Layout is <common block, source block, target block> with "0" in the
    block the domain does not own; used to check the sparse
    representation against the intended dense semantics.
    """
    if domain not in (SOURCE_DOMAIN, TARGET_DOMAIN):
        raise ValueError(f"unknown domain {domain!r}")
    zeros = ["0"] * len(values)
    common = list(values)
    if domain == SOURCE_DOMAIN:
        return common + list(values) + zeros
    return common + zeros + list(values)


def _document_instances(
    doc: Document,
    extractor: FeatureExtractor,
    domain: str | None = None,
    transit_model: CrfModel | None = None,
) -> list[TrainingInstance]:
    if doc.words is None:
        raise ValueError(f"document {doc.doc_id!r} is not segmented")
    per_sentence = extractor.document_features(doc)
    instances = []
    for si, (rows, words) in enumerate(zip(per_sentence, doc.words)):
        if transit_model is not None:
            predicted = transit_model.viterbi(rows)
            rows = [fv + [(TRANSIT_TEMPLATE, lab)] for fv, lab in zip(rows, predicted)]
        if domain is not None:
            rows = [augment(fv, domain) for fv in rows]
        instances.append(
            TrainingInstance(
                features=tuple(rows),
                gold=tuple(encode_bmes(words)),
                source_id=f"{doc.doc_id}#{si}",
            )
        )
    return instances


def corpus_instances(
    docs: Sequence[Document],
    extractor: FeatureExtractor,
    domain: str | None = None,
    transit_model: CrfModel | None = None,
) -> list[TrainingInstance]:
    out: list[TrainingInstance] = []
    for doc in docs:
        out.extend(_document_instances(doc, extractor, domain, transit_model))
    return out


def build_training(
    mode: str,
    source_docs: Sequence[Document] | None,
    target_docs: Sequence[Document],
    extractor: FeatureExtractor,
    train_config: TrainConfig = TrainConfig(),
) -> tuple[list[TrainingInstance], CrfModel | None]:
    """Assemble training instances for one adaptation mode.

    Returns the instances and, for ``transit``, the auxiliary model
    trained on the source corpus (None otherwise).  Document-level
    features are always computed per document within its own corpus.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown adaptation mode {mode!r}")
    if not target_docs:
        raise ConfigError("target corpus is empty")
    if mode != "target" and not source_docs:
        raise ConfigError(f"mode {mode!r} needs a source corpus")

    if mode == "target":
        return corpus_instances(target_docs, extractor), None
    if mode == "all":
        assert source_docs is not None
        return (
            corpus_instances(source_docs, extractor) + corpus_instances(target_docs, extractor),
            None,
        )
    if mode == "transit":
        assert source_docs is not None
        source_model = train(corpus_instances(source_docs, extractor), train_config)
        instances = corpus_instances(target_docs, extractor, transit_model=source_model)
        return instances, source_model
    assert source_docs is not None
    instances = corpus_instances(source_docs, extractor, domain=SOURCE_DOMAIN)
    instances += corpus_instances(target_docs, extractor, domain=TARGET_DOMAIN)
    return instances, None


def decoding_features(
    doc: Document,
    extractor: FeatureExtractor,
    mode: str = "target",
    source_model: CrfModel | None = None,
) -> list[list[FeatureVector]]:
    """Per-sentence feature vectors consistent with a mode's training space.

    Easy-mode test data is augmented with the target tag; transit-mode
    test data gets the source model's predicted labels.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown adaptation mode {mode!r}")
    per_sentence = extractor.document_features(doc)
    if mode == "transit":
        if source_model is None:
            raise ConfigError("transit decoding needs the auxiliary source model")
        labeled = []
        for rows in per_sentence:
            predicted = source_model.viterbi(rows)
            labeled.append([fv + [(TRANSIT_TEMPLATE, lab)] for fv, lab in zip(rows, predicted)])
        return labeled
    if mode == "easy":
        return [[augment(fv, TARGET_DOMAIN) for fv in rows] for rows in per_sentence]
    return per_sentence


def segment_document(
    model: CrfModel,
    doc: Document,
    extractor: FeatureExtractor,
    mode: str = "target",
    source_model: CrfModel | None = None,
) -> Document:
    """Decode every sentence of a document into words."""
    from .corpus import decode_bmes

    per_sentence = decoding_features(doc, extractor, mode, source_model)
    words = tuple(
        tuple(decode_bmes(sent, model.viterbi(rows)))
        for sent, rows in zip(doc.sentences, per_sentence)
    )
    return Document(doc.doc_id, doc.sentences, words)


def slice_target(docs: Sequence[Document], sizes: Sequence[int]) -> list[list[Document]]:
    """Document-granular nested prefixes of T reaching each word count.

    Each subset is the shortest prefix (in corpus order) whose cumulative
    word count reaches the requested size, so ascending sizes give nested
    subsets.
    """
    counts = [doc.word_count() for doc in docs]
    total = sum(counts)
    previous = None
    subsets: list[list[Document]] = []
    for size in sizes:
        if previous is not None and size < previous:
            raise ValueError("sizes must be ascending")
        if size > total:
            raise ValueError(f"requested {size} words but the corpus has only {total}")
        previous = size
        cumulative = 0
        prefix: list[Document] = []
        for doc, c in zip(docs, counts):
            if cumulative >= size:
                break
            prefix.append(doc)
            cumulative += c
        subsets.append(prefix)
    return subsets
