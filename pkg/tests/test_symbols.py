import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from object_kb.errors import EmptyInputError, InsufficientDataError, NotFoundError, SchemaError
from object_kb.sensing import Dims, Material, ObjectSpec, simulate_record
from object_kb.symbols import (
    BuildConfig,
    InstanceSymbols,
    KnowledgeBase,
    build_kb,
    conceptualize,
    kb_from_dict,
    kb_to_dict,
    load_kb,
    nearest_classes,
    save_kb,
    spread_labels,
    subcategorize,
)

RIGIDITY = ("soft", "medium", "rigid")


def best_contiguous_partition(values, k):
    """Exhaustive 1-D optimum: try every way to cut the sorted values into k runs."""
    xs = sorted(values)
    best, best_cut = math.inf, None
    for cuts in itertools.combinations(range(1, len(xs)), k - 1):
        bounds = (0, *cuts, len(xs))
        sse = 0.0
        for lo, hi in zip(bounds, bounds[1:]):
            run = xs[lo:hi]
            m = sum(run) / len(run)
            sse += sum((v - m) ** 2 for v in run)
        if sse < best - 1e-12:
            best, best_cut = sse, bounds
    return [xs[lo:hi] for lo, hi in zip(best_cut, best_cut[1:])]


def groups(assigned, values):
    by_label = {}
    for (iid, v) in values:
        by_label.setdefault(assigned[iid], []).append(v)
    return sorted(sorted(g) for g in by_label.values())


def pairs(xs):
    return [(f"i{n}", float(v)) for n, v in enumerate(xs)]


# -- sub-categorization -----------------------------------------------------

def test_rigidity_table_mapping():
    model, assigned = subcategorize(
        [("ceramic_cup_1", 0.76), ("ceramic_cup_2", 3.17), ("ceramic_cup_3", 7.69)], 3, RIGIDITY,
    )
    assert assigned == {"ceramic_cup_1": "soft", "ceramic_cup_2": "medium", "ceramic_cup_3": "rigid"}
    assert model.centroids == (0.76, 3.17, 7.69)


def test_descending_orientation_reverses_labels():
    _, assigned = subcategorize(pairs([0.76, 3.17, 7.69]), 3, RIGIDITY, orientation="descending")
    assert [assigned[f"i{n}"] for n in range(3)] == ["rigid", "medium", "soft"]


def test_single_cluster_identical_values():
    model, assigned = subcategorize(pairs([2.5] * 5), 1, ["only"])
    assert set(assigned.values()) == {"only"} and model.centroids == (2.5,)


def test_three_pairs_match_exhaustive_oracle():
    values = pairs([1, 1.1, 5, 5.1, 9, 9.2])
    _, assigned = subcategorize(values, 3, ["low", "mid", "high"])
    assert groups(assigned, values) == best_contiguous_partition([v for _, v in values], 3)
    assert [assigned[f"i{n}"] for n in range(6)] == ["low", "low", "mid", "mid", "high", "high"]


def test_insufficient_values():
    with pytest.raises(InsufficientDataError):
        subcategorize(pairs([1.0, 2.0]), 3, RIGIDITY)


def test_fewer_distinct_than_k():
    with pytest.raises(InsufficientDataError):
        subcategorize(pairs([1.0, 1.0, 2.0]), 3, RIGIDITY)


def test_label_count_must_match_k():
    with pytest.raises(ValueError):
        subcategorize(pairs([1.0, 2.0, 3.0]), 3, ["a", "b"])


def test_nearest_centroid_tie_goes_lower():
    model, _ = subcategorize(pairs([0.0, 2.0]), 2, ["lo", "hi"])
    assert model.label_for(1.0) == "lo"


small_sets = st.lists(st.floats(-100, 100), min_size=2, max_size=9, unique=True)


@given(small_sets, st.integers(1, 4))
def test_matches_exhaustive_partition(xs, k):
    assume(len(xs) >= k)
    values = pairs(xs)
    _, assigned = subcategorize(values, k, [f"l{i}" for i in range(k)])
    got = groups(assigned, values)
    oracle = best_contiguous_partition(xs, k)
    sse = lambda parts: sum(sum((v - sum(p) / len(p)) ** 2 for v in p) for p in parts)  # noqa: E731
    assert sse(got) <= sse(oracle) + 1e-9 * (1 + sse(oracle))


@given(small_sets, st.integers(1, 4), st.floats(0.01, 100), st.floats(-1e3, 1e3))
def test_affine_invariance(xs, k, a, b):
    assume(len(xs) >= k)
    scaled = [a * v + b for v in xs]
    assume(len(set(scaled)) == len(xs))
    # exclude near-ties where two partitions differ in cost only by rounding
    xs_sorted = sorted(xs)
    costs = []
    for cuts in itertools.combinations(range(1, len(xs)), k - 1):
        bounds = (0, *cuts, len(xs))
        costs.append(sum(np.var(xs_sorted[lo:hi]) * (hi - lo) for lo, hi in zip(bounds, bounds[1:])))
    costs.sort()
    assume(len(costs) < 2 or costs[1] - costs[0] > 1e-9 * (1 + costs[0]))
    labels = [f"l{i}" for i in range(k)]
    _, a1 = subcategorize(pairs(xs), k, labels)
    _, a2 = subcategorize(pairs(scaled), k, labels)
    assert a1 == a2


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=12))
def test_k_equal_distinct_gives_one_cluster_per_value(ints):
    xs = [float(v) for v in ints]
    k = len(set(xs))
    values = pairs(xs)
    _, assigned = subcategorize(values, k, [f"l{i}" for i in range(k)])
    by_value = {}
    for iid, v in values:
        by_value.setdefault(v, set()).add(assigned[iid])
    assert all(len(s) == 1 for s in by_value.values())
    assert len({next(iter(s)) for s in by_value.values()}) == k
    # labels follow value order
    ordered = [next(iter(by_value[v])) for v in sorted(by_value)]
    assert ordered == [f"l{i}" for i in range(k)]


def test_spread_labels():
    vocab = ("a", "b", "c", "d", "e")
    assert spread_labels(vocab, 1) == ("c",)
    assert spread_labels(vocab, 2) == ("a", "e")
    assert spread_labels(vocab, 3) == ("a", "c", "e")
    assert spread_labels(vocab, 5) == vocab


# -- conceptualization ------------------------------------------------------

def sym(iid, cls, **labels):
    return InstanceSymbols(iid, cls, labels)


def test_ceramic_cup_marginal():
    insts = [sym(f"ceramic_cup_{i}", "Ceramic Cup", rigidity=lab) for i, lab in enumerate(RIGIDITY, 1)]
    c = conceptualize(insts, "Ceramic Cup")
    assert c.marginals["rigidity"] == pytest.approx({"soft": 1 / 3, "medium": 1 / 3, "rigid": 1 / 3}, abs=1e-15)
    assert c.instance_count == 3


def test_single_instance_point_masses():
    c = conceptualize([sym("a", "X", rigidity="soft", weight="heavy")], "X")
    assert c.marginals == {"rigidity": {"soft": 1.0}, "weight": {"heavy": 1.0}}
    assert c.joint("rigidity", "weight") == {("soft", "heavy"): 1.0}


def test_joint_hand_count():
    insts = [
        sym("a", "X", rigidity="rigid", flatness="flat"),
        sym("b", "X", rigidity="rigid", flatness="flat"),
        sym("c", "X", rigidity="rigid", flatness="curved"),
        sym("d", "X", rigidity="rigid", flatness="curved"),
        sym("e", "Y", rigidity="soft", flatness="flat"),
    ]
    c = conceptualize(insts, "X")
    assert c.joint("rigidity", "flatness")[("rigid", "flat")] == 0.5
    assert c.joint("flatness", "rigidity")[("curved", "rigid")] == 0.5
    assert c.marginals["rigidity"] == {"rigid": 1.0}


def test_marginals_cover_vocabulary():
    c = conceptualize([sym("a", "X", rigidity="soft")], "X", vocabularies={"rigidity": RIGIDITY})
    assert c.marginals["rigidity"] == {"soft": 1.0, "medium": 0.0, "rigid": 0.0}


def test_empty_class():
    with pytest.raises(EmptyInputError):
        conceptualize([sym("a", "X", rigidity="soft")], "Y")


label_rows = st.lists(
    st.tuples(st.sampled_from("abc"), st.sampled_from("xy"), st.sampled_from("pqrs")), min_size=1, max_size=40,
)


@given(label_rows)
def test_distributions_sum_and_marginalize(rows):
    insts = [sym(f"i{n}", "C", p1=a, p2=b, p3=c) for n, (a, b, c) in enumerate(rows)]
    concept = conceptualize(insts, "C")
    for dist in concept.marginals.values():
        assert abs(math.fsum(dist.values()) - 1.0) <= 1e-9
    assert len(concept.joints) == 3
    for j in concept.joints:
        assert abs(math.fsum(e.proportion for e in j.entries) - 1.0) <= 1e-9
        for axis, prop in enumerate(j.properties):
            for lab, share in concept.marginals[prop].items():
                summed = math.fsum(e.proportion for e in j.entries if e.labels[axis] == lab)
                assert abs(summed - share) <= 1e-9


# -- knowledge base ---------------------------------------------------------

def assert_kb_close(a: dict, b: dict, path=""):
    assert type(a) is type(b) or {type(a), type(b)} <= {int, float}, path
    if isinstance(a, dict):
        assert a.keys() == b.keys(), path
        for k in a:
            assert_kb_close(a[k], b[k], f"{path}/{k}")
    elif isinstance(a, list):
        assert len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            assert_kb_close(x, y, f"{path}/{i}")
    elif isinstance(a, float):
        assert abs(a - b) <= 1e-12, path
    else:
        assert a == b, path


def test_corpus_kb_has_seventeen_classes(corpus_kb):
    assert len(corpus_kb.instances) == 46
    assert len(corpus_kb.classes) == 17
    assert [c.class_label for c in corpus_kb.classes] == list(range(17))
    assert sum(c.instance_count for c in corpus_kb.classes) == 46


def test_corpus_kb_roundtrip(corpus_kb, tmp_path):
    path = tmp_path / "kb.json"
    save_kb(corpus_kb, path)
    again = load_kb(path)
    assert_kb_close(kb_to_dict(corpus_kb), kb_to_dict(again))
    assert again.concept("Ceramic Cup").marginals == corpus_kb.concept("Ceramic Cup").marginals


def test_empty_kb_file(tmp_path):
    path = tmp_path / "kb.json"
    save_kb(KnowledgeBase(), path)
    doc = json.loads(path.read_text())
    assert doc["instances"] == [] and doc["classes"] == []
    assert load_kb(path).instances == []


def test_tampered_proportion(corpus_kb, tmp_path):
    doc = kb_to_dict(corpus_kb)
    marg = doc["classes"][0]["marginals"]["rigidity"]
    marg[next(iter(marg))] = 1.2
    path = tmp_path / "kb.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="distribution-sum") as e:
        load_kb(path)
    assert "/classes/0/marginals/rigidity" in str(e.value)


def test_malformed_field_names_pointer(corpus_kb, tmp_path):
    doc = kb_to_dict(corpus_kb)
    doc["models"][2]["k"] = "three"
    path = tmp_path / "kb.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="/models/2/k"):
        load_kb(path)


def test_unknown_label_rejected(corpus_kb):
    from object_kb.symbols import validate_kb_dict

    doc = kb_to_dict(corpus_kb)
    doc["instances"][0]["symbols"]["rigidity"] = "squishy"
    with pytest.raises(SchemaError, match="/instances/0/symbols/rigidity"):
        validate_kb_dict(doc)


def test_kb_dict_roundtrip_identity(corpus_kb):
    assert kb_from_dict(kb_to_dict(corpus_kb)) == corpus_kb


def test_every_instance_labeled_for_every_property(corpus_kb):
    props = corpus_kb.metadata["config"]["properties"]
    for s in corpus_kb.instances:
        assert sorted(s.symbols) == sorted(props)


def test_unknown_class_query(corpus_kb):
    with pytest.raises(NotFoundError, match="Ceramic Cup"):
        corpus_kb.concept("Teapot")


def test_nearest_classes_excludes_self(corpus_kb):
    near = nearest_classes(corpus_kb, "Ceramic Cup", 3)
    assert len(near) == 3 and all(name != "Ceramic Cup" for name, _ in near)
    assert [d for _, d in near] == sorted(d for _, d in near)


def cup(i, stiffness):
    spec = ObjectSpec(f"ceramic_cup_{i}", "Ceramic Cup", "open_cylinder", Dims(0.08, 0.08, 0.1, 0.004, 0.01),
                      Material(stiffness, 0.6, 2.4))
    return simulate_record(spec, seed=1, points_per_view=200)


def test_class_scope_reproduces_rigidity_ordering():
    records = [cup(1, 20.0), cup(2, 5.0), cup(3, 0.0)]
    kb = build_kb(records, BuildConfig(scope="class", properties=("rigidity",)))
    labels = {s.instance_id: s.symbols["rigidity"] for s in kb.instances}
    assert labels == {"ceramic_cup_1": "soft", "ceramic_cup_2": "medium", "ceramic_cup_3": "rigid"}
    assert kb.concept("Ceramic Cup").marginals["rigidity"] == pytest.approx(
        {"soft": 1 / 3, "medium": 1 / 3, "rigid": 1 / 3}, abs=1e-15)
    assert kb.model("rigidity", "Ceramic Cup").scope == "Ceramic Cup"


def test_build_is_deterministic(corpus_records):
    subset = corpus_records[:12]
    a = kb_to_dict(build_kb(subset, BuildConfig(seed=42)))
    b = kb_to_dict(build_kb(list(reversed(subset)), BuildConfig(seed=42)))
    assert json.dumps(a) == json.dumps(b)


def test_build_empty():
    with pytest.raises(EmptyInputError):
        build_kb([])


def test_custom_vocabulary_length_checked():
    with pytest.raises(ValueError):
        BuildConfig(vocabularies={"rigidity": ["a", "b"]}).vocabulary("rigidity")
