#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Independent oracle for the bundled desk-scale homophone corpus.

Re-implements romanization, phoneme-level Levenshtein (memoized recursion),
similarity, the substring dictionary tagger and top-k retrieval without
touching the C++ library, then writes:

  data/demo/entities.txt         entity repository
  data/demo/corpus.jsonl         20-utterance dataset
  data/demo/scripted_backend.json  backend that always answers rank 1
  data/demo/oracle_trace.jsonl   expected spans, rankings and corrections

Run from the repository root: python3 tests/oracles/desk_oracle.py
"""
import functools
import json
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parents[2]
DEMO = ROOT / "data" / "demo"

THRESHOLD = 0.8
K = 3

CORPUS = [
    ("我们明天去峨眉山看日出", "我们明天去鹅眉山看日出", [("峨眉山", "LOC")]),
    ("张伟今天在北京开会", "章伟今天在背景开会", [("张伟", "PER"), ("北京", "LOC")]),
    ("他在阿里巴巴工作了五年", "他在阿里爸爸工作了五年", [("阿里巴巴", "ORG")]),
    ("李娜赢得了法网冠军", "李那赢得了法网冠军", [("李娜", "PER")]),
    ("我想去杭州西湖旅游", "我想去航州西胡旅游", [("杭州", "LOC"), ("西湖", "LOC")]),
    ("腾讯发布了新的游戏", "疼讯发布了新的游戏", [("腾讯", "ORG")]),
    ("刘翔在上海训练", "刘祥在上海训练", [("刘翔", "PER"), ("上海", "LOC")]),
    ("南京长江大桥非常壮观", "难经长江大桥非常壮观", [("南京", "LOC")]),
    ("姚明曾经效力于火箭队", "摇明曾经效力于火箭对", [("姚明", "PER"), ("火箭队", "ORG")]),
    ("我们在故宫拍了很多照片", "我们在古宫拍了很多照片", [("故宫", "LOC")]),
    ("华为推出了新款手机", "花为推出了新款手机", [("华为", "ORG")]),
    ("王菲的演唱会门票售罄", "王飞的演唱会门票售罄", [("王菲", "PER")]),
    ("他从广州坐高铁到深圳", "他从光州坐高铁到深镇", [("广州", "LOC"), ("深圳", "LOC")]),
    ("周杰伦发布了新专辑", "周杰轮发布了新专辑", [("周杰伦", "PER")]),
    ("百度的搜索引擎很好用", "白度的搜索引擎很好用", [("百度", "ORG")]),
    ("我的老家在成都", "我的老家在城都", [("成都", "LOC")]),
    ("郎朗在维也纳举办音乐会", "狼朗在维也那举办音乐会", [("郎朗", "PER"), ("维也纳", "LOC")]),
    ("清华大学今年扩招", "青华大学今年扩招", [("清华大学", "ORG")]),
    ("小米的股价上涨了", "晓米的股价上涨了", [("小米", "ORG")]),
    ("我们计划去黄山看云海", "我们计划去皇山看云海", [("黄山", "LOC")]),
]

DISTRACTORS = [
    ("眉山", "LOC"), ("乐山", "LOC"), ("张维", "PER"), ("李宁", "PER"),
    ("西安", "LOC"), ("刘星", "PER"), ("南宁", "LOC"), ("王飞龙", "PER"),
    ("华夏银行", "ORG"), ("黄河", "LOC"), ("成都银行", "ORG"), ("深港", "LOC"),
    ("小明", "PER"), ("广西", "LOC"),
]

INITIALS = ["zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g",
            "k", "h", "j", "q", "x", "r", "z", "c", "s", "y", "w"]


def load_dict():
    table = {}
    for line in (ROOT / "data" / "pinyin.tsv").read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        ch, readings = line.split("\t")
        table[ch] = readings.split()[0]
    return table


def split_reading(reading):
    body = reading.rstrip("012345")
    for ini in INITIALS:
        if body.startswith(ini) and len(body) > len(ini):
            return [ini, body[len(ini):]]
    return [body]


def phonemes(text, table):
    out = []
    for ch in text:
        out.extend(split_reading(table[ch]))
    return tuple(out)


def lev(a, b):
    @functools.lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if a[i] == b[j]:
            return go(i + 1, j + 1)
        return 1 + min(go(i + 1, j), go(i, j + 1), go(i + 1, j + 1))
    return go(0, 0)


def sim(a, b):
    return 1.0 - lev(a, b) / max(len(a), len(b))


def tag(text, repo, table):
    max_len = max(len(s) for s, _ in repo)
    found = []
    for start in range(len(text)):
        for length in range(2, max_len + 1):
            if start + length > len(text):
                break
            sub = phonemes(text[start:start + length], table)
            best = max(sim(sub, phonemes(s, table)) for s, _ in repo)
            if best >= THRESHOLD:
                found.append((best, length, start))
    found.sort(key=lambda t: (-t[0], -t[1], t[2]))
    taken = [False] * len(text)
    spans = []
    for _, length, start in found:
        if any(taken[start:start + length]):
            continue
        for i in range(start, start + length):
            taken[i] = True
        spans.append((start, start + length))
    return sorted(spans)


def retrieve(span_text, repo, table):
    q = phonemes(span_text, table)
    sims = [(s, sim(q, phonemes(s, table))) for s, _ in repo]
    total = sum(v for _, v in sims)
    scored = [(s, v, v / total) for s, v in sims]
    scored.sort(key=lambda t: (-t[2], len(t[0]), t[0].encode("utf-8")))
    return scored[:K]


def main():
    table = load_dict()
    repo = []
    for _, _, ents in CORPUS:
        for e in ents:
            if e[0] not in [s for s, _ in repo]:
                repo.append(e)
    repo += DISTRACTORS

    with open(DEMO / "entities.txt", "w", encoding="utf-8") as f:
        f.write("# Desk-scale demo repository: gold entities followed by distractors.\n")
        for s, t in repo:
            f.write(f"{s}\t{t}\n")

    rules = []
    ok = True
    with open(DEMO / "corpus.jsonl", "w", encoding="utf-8") as corpus, \
            open(DEMO / "oracle_trace.jsonl", "w", encoding="utf-8") as trace:
        for n, (ref, hyp, ents) in enumerate(CORPUS):
            uid = f"demo-{n + 1:02d}"
            gold = []
            for surface, typ in ents:
                start = ref.index(surface)
                gold.append({"start": start, "end": start + len(surface), "type": typ})
            corpus.write(json.dumps({"id": uid, "reference": ref, "hypothesis": hyp,
                                     "nbest": None, "entities": gold},
                                    ensure_ascii=False) + "\n")
            spans = tag(hyp, repo, table)
            if spans != [(g["start"], g["end"]) for g in gold]:
                print(f"{uid}: tagger spans {spans} differ from gold", file=sys.stderr)
                ok = False
            corrected = hyp
            steps = []
            for start, end in spans:
                ranked = retrieve(hyp[start:end], repo, table)
                top = ranked[0][0]
                steps.append({"start": start, "end": end, "span": hyp[start:end],
                              "ranked": [{"surface": s, "similarity": v, "probability": p}
                                         for s, v, p in ranked]})
                marked = hyp[:start] + "【" + hyp[start:end] + "】" + hyp[end:]
                rules.append({"match": marked, "mode": "*",
                              "response": f"<answer>{top}</answer>",
                              "tokens": 8 + len(top)})
            for step in reversed(steps):
                top = step["ranked"][0]["surface"]
                corrected = corrected[:step["start"]] + top + corrected[step["end"]:]
            if corrected != ref:
                print(f"{uid}: rank-1 correction {corrected} != {ref}", file=sys.stderr)
                ok = False
            trace.write(json.dumps({"id": uid, "hypothesis": hyp, "steps": steps,
                                    "corrected": corrected}, ensure_ascii=False) + "\n")

    with open(DEMO / "scripted_backend.json", "w", encoding="utf-8") as f:
        json.dump({"rules": rules,
                   "default": {"response": "<answer>KEEP</answer>", "tokens": 6}},
                  f, ensure_ascii=False, indent=1)
        f.write("\n")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
