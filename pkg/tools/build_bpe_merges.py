"""Regenerate the bundled byte-pair merge table (src/addrtag/resources/bpe_merges.txt)."""

from collections import Counter
from pathlib import Path

from addrtag.embeddings import learn_merges
from addrtag.synthetic import vocabulary

EXTRA = """
street road avenue boulevard lane drive court place square terrace crescent highway
rue chemin route allee impasse place quai boulevard avenue
strasse weg gasse platz allee ring damm ufer
via viale piazza corso vicolo largo strada
calle avenida plaza paseo carrera camino
straat laan plein gracht kade weg
gatan vagen gata gade vej vei tie katu
ulitsa prospekt pereulok shosse ploshchad
north south east west nord sud est ouest norte sur este oeste
apartment suite unit floor building block flat room
city town village county province state region district
saint sainte san santa sankt mount lake river park hill
""".split()

if __name__ == "__main__":
    counts = Counter()
    for w in vocabulary():
        counts[w] += 3
    for w in EXTRA:
        counts[w] += 2
    for w in vocabulary():
        counts[w.lower()] += 1
    merges = learn_merges(dict(counts), 800)
    out = Path(__file__).resolve().parents[1] / "src/addrtag/resources/bpe_merges.txt"
    out.write_text(
        "# byte-pair merges, one 'left right' pair per line, highest priority first\n"
        + "".join(f"{a} {b}\n" for a, b in merges),
        encoding="utf-8",
    )
    print(f"wrote {len(merges)} merges to {out}")
