"""Concrete evaluation, path conditions, the interval solver, the cache."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_model, brute_force_sat, eval_expr
from tdpart.lang import INT64_MAX, INT64_MIN, Binary, Const, SymDecl, Unary, Var
from tdpart.solve import (
    DomainCapError,
    PathCondition,
    QueryCache,
    SolveError,
    check_sat,
    decode_test,
    encode_test,
    evaluate_concrete,
    get_model,
    solve_model,
    solve_path,
    wrap,
)

X, Y, Z = Var("x"), Var("y"), Var("z")


def lt(a, b):
    return Binary("<", a, b)


# -- concrete evaluation


def test_wrap_at_int64_bounds():
    assert wrap(INT64_MAX + 1) == INT64_MIN
    assert wrap(INT64_MIN - 1) == INT64_MAX
    assert wrap(INT64_MAX) == INT64_MAX
    assert wrap(-(1 << 64)) == 0


def test_evaluate_concrete_ops():
    env = {"x": 3, "y": -2}
    assert evaluate_concrete(Binary("+", X, Y), env) == 1
    assert evaluate_concrete(Binary("*", X, Y), env) == -6
    assert evaluate_concrete(Binary("<", Y, X), env) == 1
    assert evaluate_concrete(Binary("==", X, Const(3)), env) == 1
    assert evaluate_concrete(Binary("and", X, Const(0)), env) == 0
    assert evaluate_concrete(Binary("or", Const(0), Y), env) == 1
    assert evaluate_concrete(Unary("not", Const(0)), env) == 1
    assert evaluate_concrete(Unary("neg", X), env) == -3


def test_evaluate_concrete_wraps_multiplication():
    big = Const(INT64_MAX)
    assert evaluate_concrete(Binary("+", big, Const(1)), {}) == INT64_MIN
    assert evaluate_concrete(Binary("*", big, Const(2)), {}) == -2


def test_evaluate_unbound_variable():
    with pytest.raises(SolveError, match="unbound variable q"):
        evaluate_concrete(Var("q"), {})


def test_solve_path_polarity():
    assert solve_path({"x": 1, "y": 2}, lt(X, Y)) is True
    assert solve_path({"x": 2, "y": 2}, lt(X, Y)) is False


@given(st.integers(), st.integers())
def test_wrap_matches_oracle(a, b):
    from oracles import wrap64

    assert wrap(a + b) == wrap64(a + b)
    assert wrap(a * b) == wrap64(a * b)


# -- path conditions


def test_path_condition_basics():
    pc = PathCondition().extend(lt(X, Y), False).extend(lt(X, Z), True)
    assert pc.depth == 2
    assert pc.texts() == ["!(x<y)", "(x<z)"]
    assert pc.path_bits() == "01"
    assert pc.variables() == {"x", "y", "z"}
    assert pc.satisfied_by({"x": 0, "y": 0, "z": 1})
    assert not pc.satisfied_by({"x": 0, "y": 1, "z": 1})


def test_path_condition_key_is_order_independent():
    a = PathCondition().extend(lt(X, Y), True).extend(lt(Y, Z), False)
    b = PathCondition().extend(lt(Y, Z), False).extend(lt(X, Y), True)
    assert a.key() == b.key()
    assert a.path_bits() != b.path_bits()


def test_constraint_depths_are_one_based():
    pc = PathCondition().extend(lt(X, Y), True).extend(lt(Y, Z), True)
    assert [c.depth for c in pc.constraints] == [1, 2]


# -- solving


DECLS_XYZ = (SymDecl("x", -8, 7), SymDecl("y", -8, 7), SymDecl("z", -8, 7))


def test_known_lex_minimum_models():
    pc00 = PathCondition().extend(lt(X, Y), False).extend(lt(X, Z), False)
    assert get_model(pc00, DECLS_XYZ) == {"x": -8, "y": -8, "z": -8}
    pc10 = PathCondition().extend(lt(X, Y), True).extend(lt(Y, Z), False)
    assert get_model(pc10, DECLS_XYZ) == {"x": -8, "y": -7, "z": -8}


def test_unsat_contradiction():
    pc = PathCondition().extend(lt(X, Const(0)), True).extend(
        Binary(">", X, Const(0)), True
    )
    assert not check_sat(pc, (SymDecl("x", -8, 7),))
    assert solve_model(pc, (SymDecl("x", -8, 7),)) is None
    with pytest.raises(SolveError):
        get_model(pc, (SymDecl("x", -8, 7),))


def test_empty_domain_is_unsat():
    assert not check_sat(PathCondition(), (SymDecl("x", 3, 2),))


def test_domain_cap_is_enforced():
    with pytest.raises(DomainCapError):
        check_sat(PathCondition(), (SymDecl("x", 0, 99),), domain_cap=50)


def test_empty_path_condition_gives_domain_minimum():
    assert get_model(PathCondition(), DECLS_XYZ) == {"x": -8, "y": -8, "z": -8}


def test_model_respects_declaration_order_not_name_order():
    decls = (SymDecl("b", 0, 3), SymDecl("a", 0, 3))
    pc = PathCondition().extend(Binary("<", Var("a"), Var("b")), True)
    # lex order over (b, a): b=1, a=0 beats b=0 (infeasible) and a-first orders
    assert get_model(pc, decls) == {"b": 1, "a": 0}


def test_equality_chain():
    pc = (
        PathCondition()
        .extend(Binary("==", X, Y), True)
        .extend(Binary("==", Y, Z), True)
        .extend(Binary(">", X, Const(2)), True)
    )
    assert get_model(pc, DECLS_XYZ) == {"x": 3, "y": 3, "z": 3}


def test_arithmetic_through_constraints():
    # x + y == 5 with x in [0,4], y in [0,4]: lex-min is x=1, y=4
    pc = PathCondition().extend(
        Binary("==", Binary("+", X, Y), Const(5)), True
    )
    decls = (SymDecl("x", 0, 4), SymDecl("y", 0, 4))
    assert get_model(pc, decls) == {"x": 1, "y": 4}


def test_negated_compound_condition():
    # !((x<y) or (x<z)) forces x >= y and x >= z
    pc = PathCondition().extend(Binary("or", lt(X, Y), lt(X, Z)), False)
    m = get_model(pc, DECLS_XYZ)
    assert m["x"] >= m["y"] and m["x"] >= m["z"]
    assert m == {"x": -8, "y": -8, "z": -8}


# -- randomized agreement with brute force


def _random_side(rng, names, depth=0):
    r = rng.random()
    if depth >= 2 or r < 0.45:
        return Var(rng.choice(names))
    if r < 0.6:
        return Const(rng.randint(-6, 6))
    if r < 0.7:
        return Unary("neg", _random_side(rng, names, depth + 1))
    op = rng.choice(["+", "-", "*"])
    return Binary(op, _random_side(rng, names, depth + 1),
                  _random_side(rng, names, depth + 1))


def _random_atom(rng, names):
    op = rng.choice(["<", "<=", ">", ">=", "==", "!="])
    return Binary(op, _random_side(rng, names), _random_side(rng, names))


def random_constraint_expr(rng, names):
    r = rng.random()
    if r < 0.7:
        return _random_atom(rng, names)
    if r < 0.85:
        return Binary(rng.choice(["and", "or"]),
                      _random_atom(rng, names), _random_atom(rng, names))
    return Unary("not", _random_atom(rng, names))


def random_system(rng):
    names = ["x", "y", "z"][: rng.randint(1, 3)]
    decls = []
    for nm in names:
        lo = rng.randint(-4, 4)
        hi = rng.randint(lo, 4)
        decls.append(SymDecl(nm, lo, hi))
    pc = PathCondition()
    pairs = []
    for _ in range(rng.randint(1, 4)):
        e = random_constraint_expr(rng, names)
        taken = rng.random() < 0.5
        pc = pc.extend(e, taken)
        pairs.append((e, taken))
    return tuple(decls), pc, pairs


def test_solver_agrees_with_brute_force_seeded():
    rng = random.Random(20240817)
    sats = 0
    for _ in range(300):
        decls, pc, pairs = random_system(rng)
        expect = brute_force_model(pairs, decls)
        assert check_sat(pc, decls) == (expect is not None)
        if expect is not None:
            sats += 1
            assert get_model(pc, decls) == expect
    assert sats > 50  # the generator must not be degenerate


# -- query cache


def test_cache_hit_on_repeat_and_stored_model():
    cache = QueryCache()
    pc = PathCondition().extend(lt(X, Y), True)
    sat1, m1 = cache.query(pc, DECLS_XYZ)
    sat2, m2 = cache.query(pc, DECLS_XYZ)
    assert sat1 and sat2 and m1 == m2 == {"x": -8, "y": -7, "z": -8}
    assert cache.hits == 1 and cache.misses == 1
    assert len(cache) == 1


def test_cache_key_ignores_constraint_order():
    cache = QueryCache()
    a = PathCondition().extend(lt(X, Y), True).extend(lt(Y, Z), True)
    b = PathCondition().extend(lt(Y, Z), True).extend(lt(X, Y), True)
    cache.query(a, DECLS_XYZ)
    cache.query(b, DECLS_XYZ)
    assert cache.hits == 1 and len(cache) == 1


def test_cache_stores_unsat_verdicts():
    cache = QueryCache()
    pc = PathCondition().extend(lt(X, X), True)
    assert cache.query(pc, DECLS_XYZ) == (False, None)
    assert cache.query(pc, DECLS_XYZ) == (False, None)
    assert cache.hits == 1 and cache.misses == 1


# -- test serialization


def test_encode_test_golden():
    assert encode_test({}) == b"\x00\x00"
    enc = encode_test({"y": 7, "x": -8})
    assert enc == (
        b"\x00\x02"
        b"\x00\x01x\xff\xff\xff\xff\xff\xff\xff\xf8"
        b"\x00\x01y\x00\x00\x00\x00\x00\x00\x00\x07"
    )


def test_decode_test_round_trip_and_offset():
    test = {"x": -8, "y": 7, "mid": 0}
    buf = encode_test(test) + b"tail"
    got, off = decode_test(buf)
    assert got == test
    assert buf[off:] == b"tail"


def test_decode_test_truncated():
    enc = encode_test({"x": 1})
    for cut in range(len(enc)):
        with pytest.raises(ValueError, match="truncated test encoding"):
            decode_test(enc[:cut])


@given(
    st.dictionaries(
        st.text(
            st.characters(min_codepoint=ord("a"), max_codepoint=ord("z")),
            min_size=1,
            max_size=8,
        ),
        st.integers(min_value=INT64_MIN, max_value=INT64_MAX),
        max_size=6,
    )
)
def test_encode_decode_test_round_trip(test):
    got, off = decode_test(encode_test(test))
    assert got == test
    assert off == len(encode_test(test))


@settings(max_examples=60)
@given(st.integers(min_value=-4, max_value=4), st.integers(min_value=-4, max_value=4),
       st.integers(min_value=-4, max_value=4))
def test_model_satisfies_its_own_pc(a, b, c):
    pc = (
        PathCondition()
        .extend(Binary("<=", Binary("+", X, Const(a)), Y), b % 2 == 0)
        .extend(Binary(">", Binary("*", Y, Const(2)), Const(c)), c % 2 == 0)
    )
    decls = (SymDecl("x", -4, 4), SymDecl("y", -4, 4))
    if check_sat(pc, decls):
        m = get_model(pc, decls)
        assert pc.satisfied_by(m)
        assert eval_expr(pc.constraints[0].expr, dict(m)) in (0, 1)
