"""Transcribe the two failed-conversation excerpts from the source manuscript into JSON fixtures.

Usage: python3 tools/extract_failure_transcripts.py PATH/TO/paper.md tests/fixtures

Each "Turn N Guard:" / "Turn N Prisoner:" marker opens a message; the text runs
until the next marker. LaTeX line breaks are removed and paragraphs joined by
blank lines. The trailing "..." elision is dropped.
"""
import json
import re
import sys
from pathlib import Path

BOXES = {
    "failed_transcript_mixtral.json": "EXAMPLE OF FAILED MIXTRAL CONVERSATION",
    "failed_transcript_mistral.json": "EXAMPLE OF FAILED MISTRAL CONVERSATION",
}
MARKER = re.compile(r"\\textbf\{Turn (\d+) (Guard|Prisoner):\}\s*")


def transcribe(source: str, title: str) -> list[dict]:
    start = source.index(title)
    body = source[start : source.index(r"\end{tcolorbox}", start)]
    body = body.split(r"\bigskip", 1)[1]
    parts = MARKER.split(body)[1:]
    messages = []
    for n, role, text in zip(parts[0::3], parts[1::3], parts[2::3]):
        paragraphs = []
        for para in re.split(r"\n\s*\n", text):
            para = para.strip()
            para = re.sub(r"\\\\$", "", para).strip()
            if para and para != "...":
                paragraphs.append(para)
        turn = 2 * int(n) - (1 if role == "Guard" else 0)
        messages.append({"turn_index": turn, "author": role, "text": "\n\n".join(paragraphs)})
    return messages


def main(paper: str, out_dir: str) -> None:
    source = Path(paper).read_text(encoding="utf-8")
    for name, title in BOXES.items():
        msgs = transcribe(source, title)
        Path(out_dir, name).write_text(json.dumps(msgs, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        print(f"{name}: {len(msgs)} messages")


if __name__ == "__main__":
    main(*sys.argv[1:3])
