"""Figure spec files: a small INI dialect.

A spec has one ``[figure]`` section naming the kind, input CSVs, and output
base path, plus (for fig1) ordered ``[curve:...]`` sections::

    [figure]
    kind = fig1
    output_base = out/fig1
    title = Minimum quadrature variance
    log_y = true

    [curve:a]
    csv = out/fig1/single_mode_0.csv
    label = chi = 0.1 hbar, alpha = sqrt(1000)
    style = solid

Styles: solid, dashed, dashdot, dotted. For fig2 the ``[figure]`` section
instead carries ``quadrature_csv`` and ``analytic_csv`` keys.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field


class SpecError(ValueError):
    """Malformed figure spec file."""


_STYLES = {"solid": "-", "dashed": "--", "dashdot": "-.", "dotted": ":"}

_FIGURE_KEYS = {
    "fig1": {"kind", "output_base", "title", "log_y", "xlim", "ylim"},
    "fig2": {"kind", "output_base", "title", "log_y", "quadrature_csv",
             "analytic_csv", "xlim", "ylim"},
}
_CURVE_KEYS = {"csv", "label", "style"}


@dataclass
class CurveSpec:
    csv: str
    label: str
    style: str = "solid"

    @property
    def linestyle(self) -> str:
        return _STYLES[self.style]


@dataclass
class FigureSpec:
    kind: str
    output_base: str
    title: str = ""
    log_y: bool = False
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None
    curves: list[CurveSpec] = field(default_factory=list)
    quadrature_csv: str = ""
    analytic_csv: str = ""

    @property
    def svg_path(self) -> str:
        return self.output_base + ".svg"

    @property
    def png_path(self) -> str:
        return self.output_base + ".png"


def _pair(raw: str, key: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise SpecError(f"{key}: expected two comma-separated numbers, got {raw!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise SpecError(f"{key}: expected numbers, got {raw!r}") from None


def load_spec(path: str) -> FigureSpec:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise SpecError(f"{path}: {exc}") from None
    if "figure" not in parser:
        raise SpecError(f"{path}: missing [figure] section")
    fig = parser["figure"]
    kind = fig.get("kind", "").strip()
    if kind not in _FIGURE_KEYS:
        raise SpecError(f"{path}: figure.kind must be fig1 or fig2, got {kind!r}")
    unknown = set(fig) - _FIGURE_KEYS[kind]
    if unknown:
        raise SpecError(f"{path}: unknown [figure] keys for {kind}: "
                        f"{', '.join(sorted(unknown))}")
    if "output_base" not in fig:
        raise SpecError(f"{path}: figure.output_base is required")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    spec = FigureSpec(kind=kind, output_base=resolve(fig["output_base"].strip()),
                      title=fig.get("title", "").strip())
    if "log_y" in fig:
        spec.log_y = fig.getboolean("log_y")
    if "xlim" in fig:
        spec.xlim = _pair(fig["xlim"], "xlim")
    if "ylim" in fig:
        spec.ylim = _pair(fig["ylim"], "ylim")

    curve_sections = [s for s in parser.sections() if s.startswith("curve:")]
    stray = [s for s in parser.sections() if s != "figure" and s not in curve_sections]
    if stray:
        raise SpecError(f"{path}: unknown sections: {', '.join(stray)}")

    if kind == "fig1":
        if not curve_sections:
            raise SpecError(f"{path}: fig1 requires at least one [curve:...] section")
        for name in curve_sections:
            sec = parser[name]
            unknown = set(sec) - _CURVE_KEYS
            if unknown:
                raise SpecError(f"{path}: [{name}] unknown keys: "
                                f"{', '.join(sorted(unknown))}")
            if "csv" not in sec or "label" not in sec:
                raise SpecError(f"{path}: [{name}] needs csv and label keys")
            style = sec.get("style", "solid").strip()
            if style not in _STYLES:
                raise SpecError(f"{path}: [{name}] style must be one of "
                                f"{', '.join(_STYLES)}, got {style!r}")
            spec.curves.append(CurveSpec(csv=resolve(sec["csv"].strip()),
                                         label=sec["label"].strip(), style=style))
    else:
        if curve_sections:
            raise SpecError(f"{path}: fig2 takes no [curve:...] sections")
        for key in ("quadrature_csv", "analytic_csv"):
            if key not in fig:
                raise SpecError(f"{path}: figure.{key} is required for fig2")
        spec.quadrature_csv = resolve(fig["quadrature_csv"].strip())
        spec.analytic_csv = resolve(fig["analytic_csv"].strip())
    return spec
