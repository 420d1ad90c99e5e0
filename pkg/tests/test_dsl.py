from __future__ import annotations

import numpy as np
import pytest

from conftest import random_schema, random_spec
from hdtwin.dsl import (
    ComponentDef,
    Expr,
    MlpDecl,
    ModelSpec,
    ParamDecl,
    ParseError,
    SystemSchema,
    VarSpec,
    canonicalize,
    dsl_skeleton,
    format_expr,
    parse_model_spec,
    validate,
)

SCHEMA_1D = SystemSchema(states=(VarSpec("x", 0.0, 100.0),))
SCHEMA_2D = SystemSchema(states=(VarSpec("x", 0.0, 100.0), VarSpec("y", 0.0, 100.0)))


def spec_equal(a: ModelSpec, b: ModelSpec) -> bool:
    key = lambda d: d.name
    return (
        a.components == b.components
        and sorted(a.params, key=key) == sorted(b.params, key=key)
        and sorted(a.mlps, key=key) == sorted(b.mlps, key=key)
    )


# ---------------------------------------------------------------------------
# Parsing


def test_parse_logistic_growth():
    text = """
    param alpha = 0.1
    param kappa = 1000.0
    d(x)/dt = alpha * x * (1 - x / kappa)
    """
    spec = parse_model_spec(text)
    assert len(spec.components) == 1
    assert len(spec.params) == 2
    assert spec.components[0].target == "x"
    # rN(1 - N/K): mul(mul(r, N), sub(1, div(N, K)))
    e = spec.components[0].expr
    assert e.op == "mul"
    assert e.args[0].op == "mul"
    assert e.args[0].args[0] == Expr.ref("alpha")
    assert e.args[1].op == "sub"
    assert e.args[1].args[1].op == "div"


def test_parse_mlp_and_residual():
    text = """
    param a = 1.0
    mlp net(x, y, t) hidden [16, 8] act leaky_relu outputs 2
    d(x)/dt = a * x + net[0]
    d(y)/dt = net[1]
    """
    spec = parse_model_spec(text)
    assert spec.mlps[0] == MlpDecl("net", ("x", "y", "t"), (16, 8), "leaky_relu", 2)
    assert spec.components[0].residual == ("net", 0)
    assert spec.components[1].residual == ("net", 1)
    assert spec.components[1].expr == Expr.const(0.0)
    assert spec.param_count() == 1 + (3 * 16 + 16) + (16 * 8 + 8) + (8 * 2 + 2)


def test_parse_dangling_operator_names_it():
    with pytest.raises(ParseError, match=r"'\*'"):
        parse_model_spec("param beta = 1.0\nd(x)/dt = beta *")


def test_parse_errors_carry_location():
    with pytest.raises(ParseError) as err:
        parse_model_spec("d(x)/dt = 1 +\nd(y)/dt = 2")
    assert err.value.line == 1
    with pytest.raises(ParseError, match="unexpected character"):
        parse_model_spec("d(x)/dt = 1 ? 2")
    with pytest.raises(ParseError, match="unknown function"):
        parse_model_spec("d(x)/dt = relu(x)")
    with pytest.raises(ParseError, match="duplicate parameter"):
        parse_model_spec("param a = 1.0\nparam a = 2.0\nd(x)/dt = a")
    with pytest.raises(ParseError, match="undeclared network"):
        parse_model_spec("d(x)/dt = 0 + net[0]")
    with pytest.raises(ParseError, match="out of range"):
        parse_model_spec("mlp net(x) hidden [4] act relu outputs 1\nd(x)/dt = 0 + net[3]")
    with pytest.raises(ParseError, match="final additive term"):
        parse_model_spec("mlp net(x) hidden [4] act relu outputs 1\nd(x)/dt = 2 * net[0]")
    with pytest.raises(ParseError, match="final additive term"):
        parse_model_spec("mlp net(x) hidden [4] act relu outputs 1\nd(x)/dt = net[0] + x")
    with pytest.raises(ParseError, match="final additive term"):
        parse_model_spec("mlp net(x) hidden [4] act relu outputs 1\nd(x)/dt = x - net[0]")


def test_parse_comments_and_precedence():
    spec = parse_model_spec("d(x)/dt = 1 + 2 * x ^ 2.0  # quadratic\n")
    e = spec.components[0].expr
    assert e.op == "add"
    assert e.args[1].op == "mul"
    assert e.args[1].args[1].op == "pow"


def test_pow_right_associative():
    e = parse_model_spec("d(x)/dt = x ^ 2 ^ 3").components[0].expr
    assert e.op == "pow"
    assert e.args[1].op == "pow"  # x ^ (2 ^ 3)


def test_unary_minus_binds_tighter_than_mul():
    e = parse_model_spec("d(x)/dt = -x * 3").components[0].expr
    assert e.op == "mul"
    assert e.args[0].op == "neg"
    # and folds into numeric literals
    e2 = parse_model_spec("d(x)/dt = -3.5 * x").components[0].expr
    assert e2.args[0] == Expr.const(-3.5)


# ---------------------------------------------------------------------------
# Validation


def test_validate_clean_spec():
    spec = parse_model_spec("param r = 0.1\nd(x)/dt = r * x\nd(y)/dt = -r * y")
    assert validate(spec, SCHEMA_2D) == []


def test_validate_unresolved_symbol():
    spec = parse_model_spec("d(x)/dt = zeta * x")
    problems = validate(spec, SCHEMA_1D)
    assert len(problems) == 1
    assert problems[0].code == "unresolved-symbol"
    assert "zeta" in problems[0].message


def test_validate_component_count():
    spec = parse_model_spec("d(x)/dt = x")
    codes = [v.code for v in validate(spec, SCHEMA_2D)]
    assert "component-count" in codes


def test_validate_component_order_and_unknown():
    spec = parse_model_spec("d(y)/dt = y\nd(x)/dt = x")
    codes = [v.code for v in validate(spec, SCHEMA_2D)]
    assert "component-order" in codes
    spec2 = parse_model_spec("d(z)/dt = 1.0\nd(x)/dt = x")
    codes2 = [v.code for v in validate(spec2, SCHEMA_2D)]
    assert "component-unknown" in codes2


def test_validate_name_collisions_and_reserved():
    spec = ModelSpec(
        components=(ComponentDef("x", Expr.ref("x")),),
        params=(ParamDecl("x", 1.0), ParamDecl("t", 1.0)),
    )
    codes = [v.code for v in validate(spec, SCHEMA_1D)]
    assert "name-collision" in codes
    assert "reserved-name" in codes


def test_validate_mlp_problems():
    spec = ModelSpec(
        components=(ComponentDef("x", Expr.const(0.0), residual=("net", 5)),),
        mlps=(MlpDecl("net", ("bogus",), (0,), "swish", 2),),
    )
    codes = {v.code for v in validate(spec, SCHEMA_1D)}
    assert {"mlp-shape", "mlp-activation", "unresolved-symbol", "residual-unresolved"} <= codes


def test_validate_non_finite_init():
    spec = ModelSpec(
        components=(ComponentDef("x", Expr.ref("a")),),
        params=(ParamDecl("a", float("nan")),),
    )
    assert any(v.code == "non-finite" for v in validate(spec, SCHEMA_1D))


# ---------------------------------------------------------------------------
# Canonical form and fingerprint


def test_fingerprint_ignores_init_values():
    a = parse_model_spec("param r = 0.1\nd(x)/dt = r * x")
    b = parse_model_spec("param r = 99.0\nd(x)/dt = r * x")
    assert canonicalize(a).fingerprint == canonicalize(b).fingerprint
    assert canonicalize(a).text != canonicalize(b).text


def test_fingerprint_sees_operator_change():
    a = parse_model_spec("param r = 0.1\nd(x)/dt = r + x")
    b = parse_model_spec("param r = 0.1\nd(x)/dt = r * x")
    assert canonicalize(a).fingerprint != canonicalize(b).fingerprint


def test_canonicalize_fixed_point():
    text = """
    param beta = 0.5
    param alpha = 1.25e-3
    mlp net(x, t) hidden [4] act tanh outputs 1
    d(x)/dt = alpha * x - beta * x ^ 2.0 + net[0]
    """
    first = canonicalize(parse_model_spec(text))
    second = canonicalize(parse_model_spec(first.text))
    assert first == second


def test_canonicalize_sorts_declarations():
    text = canonicalize(parse_model_spec("param b = 1.0\nparam a = 2.0\nd(x)/dt = a + b")).text
    assert text.index("param a") < text.index("param b")


def test_round_trip_random_specs():
    rng = np.random.default_rng(7)
    for _ in range(300):
        schema = random_schema(rng)
        spec = random_spec(rng, schema)
        text = canonicalize(spec).text
        again = parse_model_spec(text)
        assert spec_equal(spec, again), f"round trip failed for:\n{text}"
        assert canonicalize(again) == canonicalize(spec)


def test_fingerprint_no_collisions_small_asts():
    # 1e5 random small expressions: structurally distinct specs never share
    # a fingerprint (equal structural text implies equal fingerprint by
    # construction).
    from conftest import random_expr

    rng = np.random.default_rng(11)
    seen: dict[int, str] = {}
    symbols = ["x", "p0"]
    for _ in range(100_000):
        expr = random_expr(rng, symbols, 3)
        spec = ModelSpec(
            components=(ComponentDef("x", expr),), params=(ParamDecl("p0", 1.0),)
        )
        canon = canonicalize(spec)
        prior = seen.get(canon.fingerprint)
        if prior is not None:
            assert prior == canon.text, "fingerprint collision between distinct structures"
        else:
            seen[canon.fingerprint] = canon.text


def test_format_expr_parenthesization():
    cases = [
        "x - (x - 1.0)",
        "x / (x * 2.0)",
        "(x + 1.0) * x",
        "(x ^ 2.0) ^ 3.0",
        "x ^ 2.0 ^ 3.0",
        "-(x + 1.0)",
        "-x ^ 2.0",
        "2.0 ^ (-3.0)",
    ]
    for text in cases:
        e = parse_model_spec(f"d(x)/dt = {text}").components[0].expr
        assert format_expr(e) == text


def test_skeleton_lists_states_in_order():
    sk = dsl_skeleton(SCHEMA_2D)
    assert sk.index("d(x)/dt") < sk.index("d(y)/dt")
