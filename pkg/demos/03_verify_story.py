"""The verification workflow from a newsroom's point of view.

A publisher summarises a story, registers the summary and hides its id in
the story's photo. Later somebody quotes the photo next to some text; the
reader decodes the photo and checks the text against the registry.

    python3 demos/03_verify_story.py model.ckpt

Without a checkpoint argument a small model is trained for a few hundred
steps first; it will not decode reliably, so expect DecodeFailed or
NoRecord there. Use ``newsstego train --config configs/desk.json`` for a
model that does.
"""
import sys
import tempfile
from pathlib import Path

from newsstego import TrainConfig, load_checkpoint, train
from newsstego.images import load_image, save_png, synthetic_corpus
from newsstego.verify import Registry, embed_summary, summarize_extractive, verify

STORY = (
    "Heavy rain flooded the old harbour district on Tuesday night. "
    "The harbour authority closed two piers while pumps cleared the water. "
    "A local bakery handed out bread to stranded commuters. "
    "Forecasters expect the rain to ease by Thursday, and the harbour should reopen on Friday."
)
TAMPERED = (
    "A chemical spill closed the harbour district on Tuesday night. "
    "Officials refused to say when the piers would reopen."
)

if len(sys.argv) > 1:
    params = load_checkpoint(sys.argv[1])
else:
    cfg = TrainConfig.from_dict({**TrainConfig.load("configs/desk.json").to_dict(),
                                 "steps": 300, "ramp_start": 0, "ramp_end": 300})
    params = train(synthetic_corpus(16, 64, seed=1), cfg).params

work = Path(tempfile.mkdtemp(prefix="newsstego-"))
store = Registry(work / "registry.jsonl")

summary = summarize_extractive(STORY, max_sentences=2)
print("summary registered by the publisher:\n ", summary)
photo = synthetic_corpus(1, params.image_size, seed=99)[0]
stego, entry = embed_summary(photo, summary, params, store, source_ref="harbour-flood")
save_png(stego, work / "photo.png")
print(f"id {entry.id:016x} hidden in {work / 'photo.png'}")

received = load_image(work / "photo.png")
for label, text in [("original story", STORY), ("tampered text", TAMPERED), ("no text", None)]:
    v = verify(received, text, params, store, max_sentences=2)
    sim = "-" if v.similarity is None else f"{v.similarity:.2f}"
    print(f"{label:<15} -> {v.status.value:<12} similarity {sim}  (exit code {v.exit_code})")
