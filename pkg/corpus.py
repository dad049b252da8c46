"""
Earnings-call corpus for calltopics
Ingestion, paragraph segmentation and dataset statistics
"""

import json
import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from dateutil import parser as date_parser
from loguru import logger

from errors import ConflictError, IngestError, ParameterError

_BLANK_LINES = re.compile(r"\n[ \t]*\n\s*")
_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")
_QUARTER = re.compile(r"^(\d{4})Q([1-4])$")


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, strip leading/trailing punctuation"""
    tokens = (token.strip(string.punctuation) for token in text.lower().split())
    return [token for token in tokens if token]


def count_words(text: str) -> int:
    return len(tokenize(text))


def parse_fiscal_quarter(quarter: str) -> Tuple[int, int]:
    """'2021Q4' -> (2021, 4)"""
    match = _QUARTER.match(quarter or "")
    if not match:
        raise ValueError(f"fiscal_quarter must look like YYYYQn, got {quarter!r}")
    year, q = int(match.group(1)), int(match.group(2))
    if not 1900 <= year <= 2100:
        raise ValueError(f"fiscal_quarter year out of range: {quarter!r}")
    return year, q


def quarter_ordinal(quarter: str) -> int:
    year, q = parse_fiscal_quarter(quarter)
    return year * 4 + (q - 1)


def quarter_from_ordinal(ordinal: int) -> str:
    return f"{ordinal // 4}Q{ordinal % 4 + 1}"


def quarter_span(first: str, last: str) -> List[str]:
    """Every quarter from first to last, inclusive"""
    start, end = quarter_ordinal(first), quarter_ordinal(last)
    return [quarter_from_ordinal(i) for i in range(start, end + 1)]


@dataclass(frozen=True)
class Paragraph:
    para_id: str
    doc_index: int
    text: str
    word_count: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"Paragraph {self.para_id} is empty")
        if self.doc_index < 0:
            raise ValueError("doc_index must be non-negative")


@dataclass(frozen=True)
class DocumentMetadata:
    ticker: str
    sector: str
    call_date: date
    fiscal_quarter: str

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "DocumentMetadata":
        """Accepts ticker/sector plus date|call_date and quarter|fiscal_quarter"""
        try:
            raw_date = data.get("call_date", data.get("date"))
            call_date = raw_date if isinstance(raw_date, date) else date_parser.isoparse(str(raw_date)).date()
            quarter = data.get("fiscal_quarter", data.get("quarter"))
            parse_fiscal_quarter(quarter)
            return cls(
                ticker=str(data["ticker"]).strip().upper(),
                sector=str(data.get("sector", "")).strip(),
                call_date=call_date,
                fiscal_quarter=quarter,
            )
        except (KeyError, ValueError, TypeError) as e:
            raise IngestError(f"Invalid document metadata {dict(data)}: {e}") from e


@dataclass(frozen=True)
class TranscriptDocument:
    doc_id: str
    ticker: str
    sector: str
    call_date: date
    fiscal_quarter: str
    paragraphs: Tuple[Paragraph, ...]

    def __post_init__(self):
        if not self.paragraphs:
            raise ValueError(f"Document {self.doc_id} has no paragraphs")
        indices = [p.doc_index for p in self.paragraphs]
        if indices != sorted(indices):
            raise ValueError(f"Document {self.doc_id} paragraphs are not ordered by index")
        parse_fiscal_quarter(self.fiscal_quarter)

    @property
    def word_count(self) -> int:
        return sum(p.word_count for p in self.paragraphs)

    def to_record(self) -> Dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "ticker": self.ticker,
            "sector": self.sector,
            "call_date": self.call_date.isoformat(),
            "fiscal_quarter": self.fiscal_quarter,
            "paragraphs": [
                {"para_id": p.para_id, "doc_index": p.doc_index, "text": p.text}
                for p in self.paragraphs
            ],
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "TranscriptDocument":
        try:
            meta = DocumentMetadata.from_mapping(record)
            paragraphs = tuple(
                Paragraph(
                    para_id=str(p["para_id"]),
                    doc_index=int(p["doc_index"]),
                    text=p["text"],
                    word_count=count_words(p["text"]),
                )
                for p in record["paragraphs"]
            )
            return cls(
                doc_id=str(record.get("doc_id") or make_doc_id(meta.ticker, meta.fiscal_quarter)),
                ticker=meta.ticker,
                sector=meta.sector,
                call_date=meta.call_date,
                fiscal_quarter=meta.fiscal_quarter,
                paragraphs=paragraphs,
            )
        except (KeyError, ValueError, TypeError) as e:
            raise IngestError(f"Invalid corpus record: {e}") from e


@dataclass(frozen=True)
class CorpusStats:
    total_transcripts: int
    total_paragraphs: int
    total_quarters: int
    vocabulary_size: int
    avg_paragraph_len_words: float
    std_paragraph_len_words: float
    avg_document_len_words: float
    avg_document_len_paragraphs: float
    avg_sentence_len_words: float

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def make_doc_id(ticker: str, fiscal_quarter: str) -> str:
    return f"{ticker.upper()}-{fiscal_quarter}"


def segment_paragraphs(raw_text: str, doc_id: Optional[str] = None) -> List[Paragraph]:
    """
    Split transcript text into paragraphs on blank lines

    Args:
        raw_text: Full transcript text
        doc_id: Optional prefix for paragraph ids

    Returns:
        Paragraphs with 0-based doc_index and word counts
    """
    text = raw_text.replace("\r\n", "\n").replace("\r", "\n")
    blocks = [block.strip() for block in _BLANK_LINES.split(text)]
    prefix = f"{doc_id}-" if doc_id else ""
    return [
        Paragraph(
            para_id=f"{prefix}p{index:04d}",
            doc_index=index,
            text=block,
            word_count=count_words(block),
        )
        for index, block in enumerate(b for b in blocks if b)
    ]


def ingest(path: Union[str, Path], metadata: Optional[Union[DocumentMetadata, Mapping[str, Any]]] = None) -> TranscriptDocument:
    """
    Ingest one transcript

    Args:
        path: Plain-text transcript, or a .json/.jsonl file holding one corpus record
        metadata: ticker/sector/date/quarter (required for plain text)

    Returns:
        TranscriptDocument with doc_id TICKER-YYYYQn
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(f"Cannot read {path}: {e}") from e

    if path.suffix.lower() in (".json", ".jsonl"):
        lines = [line for line in raw.splitlines() if line.strip()]
        if len(lines) != 1 and path.suffix.lower() == ".jsonl":
            raise IngestError(f"{path} holds {len(lines)} records; use load_corpus_jsonl for multi-record files")
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as e:
            raise IngestError(f"{path} is not a valid corpus record: {e}") from e
        return TranscriptDocument.from_record(record)

    if metadata is None:
        raise IngestError(f"Plain-text transcript {path} needs metadata")
    meta = metadata if isinstance(metadata, DocumentMetadata) else DocumentMetadata.from_mapping(metadata)
    doc_id = make_doc_id(meta.ticker, meta.fiscal_quarter)
    paragraphs = segment_paragraphs(raw, doc_id=doc_id)
    if not paragraphs:
        raise IngestError(f"{path} contains no text")

    logger.debug(f"Ingested {path.name} as {doc_id} ({len(paragraphs)} paragraphs)")
    return TranscriptDocument(
        doc_id=doc_id,
        ticker=meta.ticker,
        sector=meta.sector,
        call_date=meta.call_date,
        fiscal_quarter=meta.fiscal_quarter,
        paragraphs=tuple(paragraphs),
    )


def assemble_corpus(documents: Iterable[TranscriptDocument]) -> List[TranscriptDocument]:
    """Collect documents, rejecting duplicate doc_ids"""
    seen = set()
    corpus = []
    for document in documents:
        if document.doc_id in seen:
            raise ConflictError(f"Duplicate doc_id in corpus: {document.doc_id}")
        seen.add(document.doc_id)
        corpus.append(document)
    return corpus


def sort_for_pipeline(corpus: Sequence[TranscriptDocument]) -> List[TranscriptDocument]:
    """Chronological order (ties by ticker); ontology construction depends on it"""
    return sorted(corpus, key=lambda d: (d.call_date, d.ticker, d.doc_id))


def ingest_directory(
    directory: Union[str, Path],
    sidecar: Optional[Union[str, Path]] = None,
    max_workers: int = 4,
) -> List[TranscriptDocument]:
    """
    Ingest every .txt transcript in a directory

    Args:
        directory: Folder of plain-text transcripts
        sidecar: JSON mapping filename -> {ticker, sector, date, quarter};
                 defaults to <directory>/metadata.json
        max_workers: Concurrent file reads

    Returns:
        Corpus sorted for the pipeline
    """
    directory = Path(directory)
    sidecar_path = Path(sidecar) if sidecar else directory / "metadata.json"
    try:
        sidecar_data = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise IngestError(f"Cannot read sidecar metadata {sidecar_path}: {e}") from e

    files = sorted(p for p in directory.glob("*.txt"))
    missing = [p.name for p in files if p.name not in sidecar_data]
    if missing:
        raise IngestError(f"No sidecar metadata for: {missing}")

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        documents = list(pool.map(lambda p: ingest(p, sidecar_data[p.name]), files))

    logger.info(f"Ingested {len(documents)} transcripts from {directory}")
    return sort_for_pipeline(assemble_corpus(documents))


def load_corpus_jsonl(path: Union[str, Path]) -> List[TranscriptDocument]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IngestError(f"Cannot read corpus {path}: {e}") from e

    documents = []
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise IngestError(f"{path}:{line_no} is not valid JSON: {e}") from e
        documents.append(TranscriptDocument.from_record(record))
    return assemble_corpus(documents)


def save_corpus_jsonl(corpus: Sequence[TranscriptDocument], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for document in corpus:
            handle.write(json.dumps(document.to_record(), ensure_ascii=False) + "\n")
    return path


def _sentence_lengths(text: str) -> List[int]:
    lengths = []
    for sentence in _SENTENCE_END.split(text):
        words = count_words(sentence)
        if words:
            lengths.append(words)
    return lengths


def corpus_stats(corpus: Sequence[TranscriptDocument]) -> CorpusStats:
    """
    Dataset statistics: counts, vocabulary and length averages

    Averages are plain means; the paragraph-length spread is the
    population standard deviation.
    """
    paragraphs = [p for doc in corpus for p in doc.paragraphs]
    if not paragraphs:
        return CorpusStats(len(corpus), 0, len({d.fiscal_quarter for d in corpus}), 0, 0.0, 0.0, 0.0, 0.0, 0.0)

    vocabulary = set()
    sentence_lengths: List[int] = []
    for paragraph in paragraphs:
        vocabulary.update(tokenize(paragraph.text))
        sentence_lengths.extend(_sentence_lengths(paragraph.text))

    para_lengths = np.array([p.word_count for p in paragraphs], dtype=float)
    doc_words = np.array([d.word_count for d in corpus], dtype=float)
    doc_paragraphs = np.array([len(d.paragraphs) for d in corpus], dtype=float)

    return CorpusStats(
        total_transcripts=len(corpus),
        total_paragraphs=len(paragraphs),
        total_quarters=len({d.fiscal_quarter for d in corpus}),
        vocabulary_size=len(vocabulary),
        avg_paragraph_len_words=float(para_lengths.mean()),
        std_paragraph_len_words=float(para_lengths.std()),
        avg_document_len_words=float(doc_words.mean()),
        avg_document_len_paragraphs=float(doc_paragraphs.mean()),
        avg_sentence_len_words=float(np.mean(sentence_lengths)) if sentence_lengths else 0.0,
    )


def paragraph_length_histogram(corpus: Sequence[TranscriptDocument], bin_width: int = 10) -> List[Tuple[int, int]]:
    """(bin_start, count) for paragraph word counts; counts sum to total_paragraphs"""
    if bin_width < 1:
        raise ParameterError("bin_width must be >= 1")
    counts = Counter(p.word_count // bin_width for doc in corpus for p in doc.paragraphs)
    if not counts:
        return []
    return [(b * bin_width, counts.get(b, 0)) for b in range(0, max(counts) + 1)]


def document_index(corpus: Sequence[TranscriptDocument]) -> Dict[str, TranscriptDocument]:
    return {doc.doc_id: doc for doc in corpus}

