"""The operation catalog of the block language.

Each entry lists the positional parameter order and defaults.  A default
of KERNEL means "same as kernel_size" (the pooling stride convention).
Arity is the number of incoming edges the validator requires.
"""

from __future__ import annotations

from dataclasses import dataclass

from .expr import Lit, ParamExpr

KERNEL = "kernel_size"  # sentinel default: copy the kernel_size argument


@dataclass(frozen=True)
class Param:
    name: str
    default: object = None  # None = required; Lit = literal default; KERNEL


@dataclass(frozen=True)
class OpSpec:
    name: str
    params: tuple[Param, ...] = ()
    variadic: bool = False       # permute/repeat/reshape take a bare int list
    variadic_name: str = ""
    arity: object = 1            # int for exact, ">=2" for merge ops


_SPECS = [
    OpSpec("Conv2d", (
        Param("out_channels"),
        Param("kernel_size"),
        Param("stride", Lit(1)),
        Param("dilation", Lit(1)),
        Param("groups", Lit(1)),
    )),
    OpSpec("Linear", (Param("out_channels"),)),
    OpSpec("AvgPool2d", (Param("kernel_size"), Param("stride", KERNEL))),
    OpSpec("MaxPool2d", (Param("kernel_size"), Param("stride", KERNEL))),
    OpSpec("AdaptiveMaxPool2d", (Param("output_size"),)),
    OpSpec("AdaptiveAvgPool2d", (Param("output_size"),)),
    OpSpec("Add", arity=">=2"),
    OpSpec("Mul", arity=">=2"),
    OpSpec("Multiply", arity=">=2"),
    OpSpec("concat", (Param("dim"),), arity=">=2"),
    OpSpec("mean", (Param("dim"),)),
    OpSpec("max", (Param("dim"),)),
    OpSpec("sum", (Param("dim"),)),
    OpSpec("softmax", (Param("dim"),)),
    OpSpec("ReLU"),
    OpSpec("GELU"),
    OpSpec("Sigmoid"),
    OpSpec("BN"),
    OpSpec("LN"),
    OpSpec("permute", variadic=True, variadic_name="dims"),
    OpSpec("repeat", variadic=True, variadic_name="sizes"),
    OpSpec("reshape", variadic=True, variadic_name="shape"),
    OpSpec("input", arity=0),
    OpSpec("output", arity=1),
]

CATALOG: dict[str, OpSpec] = {spec.name: spec for spec in _SPECS}

MERGE_OPS = frozenset(spec.name for spec in _SPECS if spec.arity == ">=2")


def is_known(op: str) -> bool:
    return op in CATALOG


def resolve_args(op: str, args: list[tuple[str | None, ParamExpr]]) -> dict[str, ParamExpr] | list[ParamExpr]:
    """Map positional/named arguments to a fully-defaulted parameter dict.

    Variadic ops return the bare expression list instead.  Raises
    ValueError on unknown names, duplicates, or missing required params.
    """
    spec = CATALOG[op]
    if spec.variadic:
        for name, _ in args:
            if name is not None:
                raise ValueError(f"{op} takes a bare value list, got named argument {name!r}")
        if not args:
            raise ValueError(f"{op} requires at least one value")
        return [expr for _, expr in args]

    by_name: dict[str, ParamExpr] = {}
    positional = True
    for i, (name, expr) in enumerate(args):
        if name is None:
            if not positional:
                raise ValueError(f"positional argument after named argument in {op}")
            if i >= len(spec.params):
                raise ValueError(f"{op} takes at most {len(spec.params)} arguments")
            by_name[spec.params[i].name] = expr
        else:
            positional = False
            if name not in {p.name for p in spec.params}:
                raise ValueError(f"{op} has no parameter {name!r}")
            if name in by_name:
                raise ValueError(f"duplicate argument {name!r} in {op}")
            by_name[name] = expr

    for param in spec.params:
        if param.name in by_name:
            continue
        if param.default is None:
            raise ValueError(f"{op} missing required parameter {param.name!r}")
        if param.default is KERNEL:
            by_name[param.name] = by_name["kernel_size"]
        else:
            by_name[param.name] = param.default
    return {p.name: by_name[p.name] for p in spec.params}
