"""Regenerate the bundled lexicon, entity catalogs and templates.

One-off maintenance script; the package itself never imports the sources
used here.  Requires ``cmudict``, ``names``, ``geonamescache`` and
``msgpack`` plus a local wordfreq wheel (for its English frequency table)::

    python tools/build_fixtures.py --wordfreq-wheel wordfreq-3.1.1-py3-none-any.whl
"""
import argparse
import gzip
import os
import random
import re
import zipfile

import cmudict
import geonamescache
import msgpack
import names

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "kpat", "data")
WORD_RE = re.compile(r"^[a-z][a-z']*$")

TEMPLATES = {
    "full_names": [
        "my name is {entity}",
        "this is {entity}",
        "my name's {entity}",
        "call {entity}",
        "i want to talk to {entity}",
        "please send it to {entity}",
        "it is {entity} speaking",
        "can you find {entity}",
    ],
    "airports": [
        "i'm at {entity}",
        "book a flight to {entity}",
        "i am flying into {entity}",
        "i need a ticket from {entity}",
        "my flight leaves from {entity}",
        "is there a flight to {entity}",
        "i will land in {entity}",
        "pick me up at {entity}",
    ],
    "street_names": [
        "i stay in {entity}",
        "i live on {entity}",
        "take me to {entity}",
        "my office is on {entity}",
        "turn left on {entity}",
        "the shop is on {entity}",
        "drop me at {entity}",
        "we moved to {entity}",
    ],
    "cities_states": [
        "my house is in {entity}",
        "i work in {entity}",
        "i'm from {entity}",
        "book a car to {entity}",
        "what is the weather in {entity}",
        "we are driving to {entity}",
        "my home is in {entity}",
        "show me hotels in {entity}",
    ],
}

STOPWORDS = """a about above after again against all am an and any are as at be
because been before being below between both but by can could did do does
doing down during each few for from further had has have having he her here
hers herself him himself his how i i'm if in into is it it's its itself just
me more most my myself no nor not now of off on once only or other our ours
out over own same she should so some such than that the their theirs them
then there these they this those through to too under until up very was we
were what when where which while who whom why will with would you your yours
""".split()


def pron_table():
    table = {}
    for word, prons in cmudict.dict().items():
        if WORD_RE.match(word):
            table[word] = [[re.sub(r"\d", "", p) for p in pron] for pron in prons]
    return table


def frequent_words(wheel, n, table):
    z = zipfile.ZipFile(wheel)
    bins = msgpack.loads(gzip.decompress(z.read("wordfreq/data/small_en.msgpack.gz")), raw=False)
    out = []
    for b in bins[1:]:
        for w in b:
            if w in table and w not in out:
                out.append(w)
        if len(out) >= n:
            break
    return out[:n]


def in_lex(phrase, table):
    return all(w in table for w in phrase.split())


def build_catalogs(table, sizes, rng):
    base = os.path.dirname(names.__file__)

    def census(fname, n):
        out = []
        with open(os.path.join(base, fname)) as f:
            for line in f:
                w = line.split()[0].lower()
                if w in table and len(w) > 2:
                    out.append(w)
                if len(out) >= n:
                    break
        return out

    firsts = census("dist.female.first", 400) + census("dist.male.first", 400)
    lasts = census("dist.all.last", 2500)
    seen = set()
    full = []
    while len(full) < sizes["full_names"]:
        n = f"{rng.choice(firsts)} {rng.choice(lasts)}"
        if n not in seen:
            seen.add(n)
            full.append(n)

    gc = geonamescache.GeonamesCache()
    cities = sorted(gc.get_cities().values(), key=lambda c: (-c["population"], c["name"]))
    airports = []
    for c in cities:
        name = c["name"].lower()
        if c["countrycode"] != "US" and WORD_RE.match(name) and name in table and name not in seen:
            seen.add(name)
            airports.append(name)
        if len(airports) >= sizes["airports"]:
            break

    streets = []
    for c in sorted(gc.get_us_counties(), key=lambda c: c["fips"]):
        name = re.sub(r" (county|parish|borough|city)$", "", c["name"].lower())
        if WORD_RE.match(name) and name in table and name not in seen:
            seen.add(name)
            streets.append(name)
        if len(streets) >= sizes["street_names"]:
            break

    places = [s["name"].lower() for s in gc.get_us_states().values()]
    for c in cities:
        if c["countrycode"] == "US":
            places.append(c["name"].lower())
    cs = []
    for name in places:
        if len(name.split()) <= 2 and all(WORD_RE.match(w) for w in name.split()) \
                and in_lex(name, table) and name not in seen:
            seen.add(name)
            cs.append(name)
        if len(cs) >= sizes["cities_states"]:
            break
    return {"full_names": full, "airports": airports, "street_names": streets, "cities_states": cs}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wordfreq-wheel", required=True)
    ap.add_argument("--common", type=int, default=2200)
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()

    table = pron_table()
    rng = random.Random(args.seed)
    sizes = {"full_names": 700, "airports": 650, "street_names": 650, "cities_states": 650}
    catalogs = build_catalogs(table, sizes, rng)

    words = set(frequent_words(args.wordfreq_wheel, args.common, table))
    for tmpls in TEMPLATES.values():
        for t in tmpls:
            words.update(w for w in t.split() if w != "{entity}")
    for ents in catalogs.values():
        for e in ents:
            words.update(e.split())
    words.update(w for w in STOPWORDS if w in table)
    missing = [w for w in words if w not in table]
    assert not missing, missing

    os.makedirs(os.path.join(DATA, "catalogs"), exist_ok=True)
    with open(os.path.join(DATA, "lexicon.dict"), "w") as f:
        f.write(";;; ARPAbet pronunciations (stress removed), first variant is primary\n")
        for w in sorted(words):
            seen = set()
            for pron in table[w]:
                if tuple(pron) not in seen:  # stress removal can collapse variants
                    seen.add(tuple(pron))
                    f.write(f"{w.upper()}  {' '.join(pron)}\n")
    for dom, ents in catalogs.items():
        with open(os.path.join(DATA, "catalogs", f"{dom}.txt"), "w") as f:
            f.write("\n".join(ents) + "\n")
    with open(os.path.join(DATA, "templates.tsv"), "w") as f:
        for dom, tmpls in TEMPLATES.items():
            for t in tmpls:
                f.write(f"{dom}\t{t}\n")
    with open(os.path.join(DATA, "stopwords.txt"), "w") as f:
        f.write("\n".join(STOPWORDS) + "\n")
    print(len(words), "words;", {k: len(v) for k, v in catalogs.items()})


if __name__ == "__main__":
    main()
