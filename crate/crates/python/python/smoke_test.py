"""Smoke test for the senseswitch_py extension.

Build and run:
    cargo build --release -p senseswitch-py --features extension-module
    cp target/release/libsenseswitch_py.so crates/python/python/senseswitch_py.so
    python3 crates/python/python/smoke_test.py
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import senseswitch_py as ss  # noqa: E402

INVENTORY = "\n".join(
    json.dumps(s)
    for s in [
        {"id": "bank_fin#n", "pos": "n", "lex": {"en": ["bank"], "it": ["banca"]}},
        {"id": "bank_river#n", "pos": "n", "lex": {"en": ["bank"], "it": ["riva"]}},
        {"id": "money#n", "pos": "n", "lex": {"en": ["money"], "it": ["denaro"]}},
    ]
)


def check_inventory():
    inv = ss.SenseInventory.from_jsonl(INVENTORY)
    assert len(inv) == 3
    assert inv.translations("bank_river#n", "it") == ["riva"]
    [(lemma, provenance, path)] = inv.translations_with_fallback("bank_fin#n", "it")
    assert (lemma, provenance, path) == ("banca", "direct", ["bank_fin#n"])
    return inv


def check_noising(inv):
    lex = ss.BilingualLexicon.from_pairs("en", "it", [("bank", "banca"), ("bank", "riva"), ("money", "denaro")])
    assert "bank" in lex and lex.candidates("bank") == ["banca", "riva"]

    aa_cfg = ss.NoisingConfig("aa", ["en", "it"], replacement_ratio=1.0, seed=3)
    aa = ss.noise_aa(["the", "bank", "money"], "en", [lex], aa_cfg)
    assert aa.eligible == 2
    assert aa.tokens[0] == "the" and aa.tokens[1] in ("banca", "riva") and aa.tokens[2] == "denaro"
    assert all(s["method"] == "lexicon-random" for s in aa.substitutions())

    wsp_cfg = ss.NoisingConfig("wsp", ["en", "it"], replacement_ratio=1.0, seed=3)
    annotations = [(1, 1, "bank", "n", "bank_river#n")]
    wsp = ss.noise_wsp(["the", "Bank", "money"], "en", annotations, inv, wsp_cfg)
    assert wsp.tokens == ["the", "Riva", "money"], wsp.tokens
    [sub] = wsp.substitutions()
    assert sub["synset"] == "bank_river#n" and sub["method"].startswith("kb")

    again = ss.noise_wsp(["the", "Bank", "money"], "en", annotations, inv, wsp_cfg)
    assert again.tokens == wsp.tokens

    try:
        ss.NoisingConfig("xx", ["it"])
    except ValueError:
        pass
    else:
        raise AssertionError("unknown mode accepted")


def check_training():
    pairs = [
        (["<lang_en>", w], ["<lang_it>", t])
        for w, t in [("bank", "banca"), ("money", "denaro"), ("river", "fiume")]
    ] * 4
    model, curve = ss.train(pairs, dim=8, steps=300, batch_size=4, learning_rate=0.05, seed=1)
    assert len(curve) == 300
    assert curve[-1][1] < curve[0][1]
    out = model.translate(["<lang_en>", "money"], prefix=["<lang_it>"], max_len=4)
    assert out[0] == "<lang_it>"
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        loaded = ss.Model.load(path)
        assert loaded.vocab_size == model.vocab_size
        assert loaded.translate(["<lang_en>", "money"], prefix=["<lang_it>"], max_len=4) == out


def check_metrics():
    assert abs(ss.bleu(["a b c d"], ["a b c d"]) - 100.0) < 1e-9
    assert abs(ss.chrf("the cat", "the cat") - 100.0) < 1e-9
    assert ss.corpus_chrf(["abc"], ["xyz"]) < 10.0
    t, df, p = ss.t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert t == 0.0 and df == 4.0 and p == 1.0

    with tempfile.TemporaryDirectory() as d:
        items = os.path.join(d, "items.jsonl")
        with open(items, "w") as f:
            for i, (good, bad) in enumerate([("banca", "riva"), ("riva", "banca")]):
                item = {"id": f"t{i}", "src": "the bank", "word": "bank",
                        "pos": "n", "good": [good], "bad": [bad]}
                f.write(json.dumps(item) + "\n")
        report = ss.dibimt_score(items, {"t0": "la banca", "t1": "la banca"}, "it")
        assert report["good_hits"] == 1 and report["bad_hits"] == 1 and report["accuracy"] == 0.5


def check_cli():
    assert ss.run_cli(["--help"]) == 0
    assert ss.run_cli(["validate", "--config", "/nonexistent/run.toml"]) == 2


def main():
    inv = check_inventory()
    check_noising(inv)
    check_training()
    check_metrics()
    check_cli()
    print("smoke test passed")


if __name__ == "__main__":
    main()
