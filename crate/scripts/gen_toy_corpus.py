#!/usr/bin/env python3
"""Generate the bundled review corpora from a small seeded grammar.

Output is raw text in the same shape as scraped reviews: one review per line,
mixed case, punctuation and stray HTML line breaks, so it exercises the
preprocessing pipeline before training.

    gen_toy_corpus.py N            small vocabulary (toy_reviews.txt)
    gen_toy_corpus.py N NAMES      adds NAMES Zipf-distributed proper nouns
                                   (bench_reviews.txt uses 4000 4000)
"""
import random
import sys

R = random.Random(20211)

ADJ_POS = "great good wonderful brilliant fantastic superb lovely charming beautiful moving powerful clever funny touching solid strong gripping memorable stunning delightful fresh".split()
ADJ_NEG = "bad terrible awful boring dull weak poor silly stupid lame messy flat tired predictable painful forgettable confusing clumsy bland slow".split()
ADJ = ADJ_POS + ADJ_NEG
ADV = "really very quite truly pretty rather so extremely incredibly simply fairly oddly surprisingly genuinely".split()
NOUN = "movie film story plot script cast acting ending director music score dialogue camera scene character hero villain sequel soundtrack pacing humor".split()
NOUN_PL = "movies films stories actors scenes characters moments jokes effects songs critics fans kids parents friends people twists lines".split()
PERSON = "i we my wife my husband my brother my sister my friend my dad my mom everyone nobody".split(" ")
PERSON = ["i", "we", "my wife", "my husband", "my brother", "my sister", "my friend", "my dad", "my mom", "everyone", "nobody", "the audience", "the kids"]
VERB_PAST = "loved liked hated enjoyed watched saw missed remembered forgot noticed admired expected wanted recommended found".split()
VERB_INF = "watch see love like hate enjoy recommend forget remember understand explain follow trust believe".split()
TIME = ["last night", "yesterday", "last week", "on sunday", "at home", "in the theater", "on tv", "twice", "again", "years ago", "as a kid", "with friends"]
ACTOR = "the lead actor,the lead actress,the young star,the old man,the main villain,the best friend,the mother,the father,the detective,the narrator".split(",")
CONJ = ["but", "and", "because", "although", "while", "so", "yet"]
OPEN = ["honestly", "overall", "frankly", "in my opinion", "to be fair", "sadly", "thankfully", "of course", "in the end", "at first"]
GENRE = "horror comedy drama thriller romance western musical documentary action mystery".split()
PLACE = ["the city", "a small town", "the desert", "the ocean", "a school", "the house", "a prison", "the forest", "the future", "the war"]


NAMES = []
NAME_CUM = []
ONSET = "b c d f g h j k l m n p r s t v w z br cr dr fr gr kr pr tr st sh ch th bl cl fl gl pl sl".split()
VOWEL = "a e i o u ai ea ie oa ou".split()
CODA = ["", "", "n", "r", "l", "s", "th", "nd", "rk", "st", "m", "x"]


def make_names(n):
    g = random.Random(77)
    seen = set()
    while len(NAMES) < n:
        w = "".join(g.choice(ONSET) + g.choice(VOWEL) for _ in range(g.randint(1, 3))) + g.choice(CODA)
        if len(w) > 2 and w not in seen:
            seen.add(w)
            NAMES.append(w)
    total = 0.0
    for i in range(n):
        total += 1.0 / (i + 1)
        NAME_CUM.append(total)


def name():
    return R.choices(NAMES, cum_weights=NAME_CUM)[0]


def c(xs):
    return R.choice(xs)


def np_():
    if NAMES and R.random() < 0.3:
        return name()
    r = R.random()
    if r < 0.35:
        return "the " + c(NOUN)
    if r < 0.55:
        return "this " + c(NOUN)
    if r < 0.7:
        return "the " + c(ADJ) + " " + c(NOUN)
    if r < 0.85:
        return c(ACTOR)
    return "the " + c(NOUN_PL)


def adjp():
    r = R.random()
    if r < 0.4:
        return c(ADJ)
    if r < 0.8:
        return c(ADV) + " " + c(ADJ)
    return c(ADJ) + " and " + c(ADJ)


def named_clause():
    r = R.random()
    if r < 0.2:
        return f"{name()} plays {name()} in {name()}"
    if r < 0.4:
        return f"{name()} was directed by {name()}"
    if r < 0.55:
        return f"{name()} and {name()} are {adjp()} together"
    if r < 0.7:
        return f"{c(PERSON)} {c(VERB_PAST)} {name()} more than {name()}"
    if r < 0.85:
        return f"the {c(NOUN)} by {name()} is {adjp()}"
    return f"{name()} {name()} {name()}"


def clause():
    if NAMES and R.random() < 0.35:
        return named_clause()
    r = R.random()
    if r < 0.18:
        return f"{np_()} was {adjp()}"
    if r < 0.30:
        return f"{np_()} is {adjp()}"
    if r < 0.42:
        return f"{c(PERSON)} {c(VERB_PAST)} {np_()}"
    if r < 0.50:
        return f"{c(PERSON)} {c(VERB_PAST)} it {c(TIME)}"
    if r < 0.58:
        return f"it is a {adjp()} {c(GENRE)} about {c(PLACE)}"
    if r < 0.65:
        return f"{c(PERSON)} could not {c(VERB_INF)} {np_()}"
    if r < 0.72:
        return f"you will {c(VERB_INF)} {np_()} if you like {c(GENRE)}"
    if r < 0.78:
        return f"{np_()} felt {adjp()} and {c(ADJ)}"
    if r < 0.84:
        return f"there are {c(ADV)} {c(ADJ)} {c(NOUN_PL)} in {np_()}"
    if r < 0.90:
        return f"{c(ACTOR)} does a {adjp()} job in {c(PLACE)}"
    if r < 0.95:
        return f"{c(PERSON)} don't think {np_()} works"
    return f"{np_()} isn't as {c(ADJ)} as {np_()}"


def sentence():
    s = clause()
    r = R.random()
    if r < 0.35:
        s = f"{s} {c(CONJ)} {clause()}"
    if R.random() < 0.2:
        s = f"{c(OPEN)}, {s}"
    s = s[0].upper() + s[1:]
    return s + c([".", ".", ".", "!", "?", "!!", "..."])


def review():
    parts = []
    for _ in range(R.randint(2, 6)):
        parts.append(sentence())
        if R.random() < 0.15:
            parts.append("<br /><br />")
    return " ".join(parts)


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2500
    if len(sys.argv) > 2:
        make_names(int(sys.argv[2]))
    for _ in range(n):
        print(review())


if __name__ == "__main__":
    main()
