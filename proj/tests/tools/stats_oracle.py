#!/usr/bin/env python3
"""Independent statistics oracle.

Recomputes the dataset statistics table from a normalized corpus dump and a
manifest, sharing no code with the C++ implementation. Used once to freeze
tests/golden/fixture_stats.txt; kept in the repo so the golden file can be
re-audited.

Usage: stats_oracle.py <corpus_dump> <manifest> [out]
"""

import sys


def parse_manifest(path):
    config = {}
    vocab = set()
    meta = {}  # word -> [sentence ids]
    split_words = {"train": [], "valid": [], "test": []}
    split_lm = {"train": [], "valid": [], "test": []}
    section = None
    for raw in open(path, encoding="utf-8"):
        line = raw.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            section = line
            continue
        if section == "[config]":
            key, value = line.split(" = ", 1)
            config[key] = value
        elif section == "[vocab]":
            _id, token = line.split(" ", 1)
            vocab.add(token)
        elif section == "[meta]":
            word, ids = line.split(" :", 1)
            meta[word] = [int(x) for x in ids.split()]
        elif section == "[lm-pool]":
            pass
        elif section == "[splits]":
            head, items = line.split(" :", 1)
            split, kind = head.split(" ")
            if kind == "words":
                split_words[split] = items.split()
            else:
                split_lm[split] = [int(x) for x in items.split()]
    return config, vocab, meta, split_words, split_lm


def main():
    corpus_path, manifest_path = sys.argv[1], sys.argv[2]
    out_path = sys.argv[3] if len(sys.argv) > 3 else None
    sentences = [line.split() for line in open(corpus_path, encoding="utf-8")]
    config, vocab, meta, split_words, split_lm = parse_manifest(manifest_path)
    assert len(sentences) == int(config["n_sentences"])

    splits = ["train", "valid", "test"]
    rows = []

    def cell_long(v):
        return f"{v:>12d}"

    def cell_mean(v):
        return f"{v:>12.2f}"

    def cell_rate(v):
        return f"{v * 100.0:>11.2f}%"

    meta_stats = {}
    lm_stats = {}
    for split in splits:
        n_words = len(split_words[split])
        total_uses = 0
        total_tokens = 0
        n_sentences = 0
        unk = 0
        for word in split_words[split]:
            ids = meta[word]
            total_uses += len(ids)
            for sid in ids:
                toks = sentences[sid]
                n_sentences += 1
                total_tokens += len(toks)
                unk += sum(1 for t in toks if t != word and t not in vocab)
        meta_stats[split] = dict(
            n_words=n_words,
            total_uses=total_uses,
            mean_uses=total_uses / n_words if n_words else 0.0,
            total_tokens=total_tokens,
            mean_len=total_tokens / n_sentences if n_sentences else 0.0,
            unk_rate=unk / total_tokens if total_tokens else 0.0,
        )
        lm_tokens = 0
        lm_unk = 0
        for sid in split_lm[split]:
            toks = sentences[sid]
            lm_tokens += len(toks)
            lm_unk += sum(1 for t in toks if t not in vocab)
        n_lm = len(split_lm[split])
        lm_stats[split] = dict(
            n_sentences=n_lm,
            total_tokens=lm_tokens,
            mean_len=lm_tokens / n_lm if n_lm else 0.0,
            unk_rate=lm_unk / lm_tokens if lm_tokens else 0.0,
        )

    out = []
    out.append("dataset statistics")
    out.append(f"vocabulary size {len(vocab) + 3}")
    out.append(f"{'portion':<34}{'train':>12}{'valid':>12}{'test':>12}")

    def row(label, cells):
        out.append(f"{label:<34}" + "".join(cells))

    row("meta  #meta-learned words",
        [cell_long(meta_stats[s]["n_words"]) for s in splits])
    row("meta  total #uses",
        [cell_long(meta_stats[s]["total_uses"]) for s in splits])
    row("meta  mean #uses",
        [cell_mean(meta_stats[s]["mean_uses"]) for s in splits])
    row("meta  total #tokens",
        [cell_long(meta_stats[s]["total_tokens"]) for s in splits])
    row("meta  mean sentence length",
        [cell_mean(meta_stats[s]["mean_len"]) for s in splits])
    row("meta  unk rate",
        [cell_rate(meta_stats[s]["unk_rate"]) for s in splits])
    row("lm    #sentences",
        [cell_long(lm_stats[s]["n_sentences"]) for s in splits])
    row("lm    total #tokens",
        [cell_long(lm_stats[s]["total_tokens"]) for s in splits])
    row("lm    mean sentence length",
        [cell_mean(lm_stats[s]["mean_len"]) for s in splits])
    row("lm    unk rate",
        [cell_rate(lm_stats[s]["unk_rate"]) for s in splits])
    row("total #tokens",
        [cell_long(meta_stats[s]["total_tokens"] + lm_stats[s]["total_tokens"])
         for s in splits])
    text = "\n".join(out) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
