"""Network, candidate and overlay files (YAML, versioned schema)."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import yaml

from .epitome import ConvSpec, EpitomeSpec, PatchDims, make_epitome, uniform_epitome
from .errors import DimensionError, PimError, SpecParseError
from .mapping import XbarConfig

NETWORK_SCHEMA = "epitome-pim-network/1"
CANDIDATE_SCHEMA = "epitome-pim-candidates/1"
_SHORTHAND = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$")


@dataclass(frozen=True)
class Layer:
    conv: ConvSpec
    epitome: EpitomeSpec | None = None
    wrap: bool = False

    @property
    def name(self) -> str:
        return self.conv.name


@dataclass(frozen=True)
class Network:
    name: str
    layers: tuple[Layer, ...]
    xbar: XbarConfig | None = None

    def __len__(self) -> int:
        return len(self.layers)

    def baseline(self) -> "Network":
        return replace(self, layers=tuple(Layer(l.conv, None, l.wrap) for l in self.layers))

    def with_epitomes(self, epitomes) -> "Network":
        return replace(self, layers=tuple(Layer(l.conv, e, l.wrap) for l, e in zip(self.layers, epitomes)))

    def with_wrap(self, wrap: bool) -> "Network":
        return replace(self, layers=tuple(Layer(l.conv, l.epitome, wrap) for l in self.layers))


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    mapping["__line__"] = node.start_mark.line + 1
    mapping["__keylines__"] = {k.value: k.start_mark.line + 1 for k, _ in node.value
                               if isinstance(k, yaml.ScalarNode)}
    return mapping


_META = ("__line__", "__keylines__")


def _line_of(rec: dict, key: str | None = None):
    if key is not None and key in rec.get("__keylines__", {}):
        return rec["__keylines__"][key]
    return rec.get("__line__")


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _load_yaml(text: str, path: str | None):
    try:
        return yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise SpecParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line, path) from None


def _strip_lines(obj):
    if isinstance(obj, dict):
        return {k: _strip_lines(v) for k, v in obj.items() if k not in _META}
    if isinstance(obj, list):
        return [_strip_lines(v) for v in obj]
    return obj


def _int_field(rec: dict, key: str, path, default=None) -> int:
    if key not in rec:
        if default is None:
            raise SpecParseError(f"missing field {key!r}", _line_of(rec), path)
        return default
    value = rec[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecParseError(f"field {key!r} must be an integer, got {value!r}", _line_of(rec, key), path)
    return value


def parse_epitome(value, conv: ConvSpec, xbar: XbarConfig | None, path=None, line=None) -> EpitomeSpec | None:
    """``None``/"none", an ``RxC`` shorthand, or an explicit dims mapping."""
    xbar_cols = xbar.cols if xbar is not None else None
    if value is None or (isinstance(value, str) and value.strip().lower() == "none"):
        return None
    if isinstance(value, str):
        m = _SHORTHAND.match(value)
        if not m:
            raise SpecParseError(f"{conv.name}: cannot read epitome {value!r}", line, path)
        epi = uniform_epitome(conv, int(m.group(1)), int(m.group(2)), xbar_cols=xbar_cols)
        if epi is None:
            raise SpecParseError(f"{conv.name}: layer too small for a {value} epitome", line, path)
        return epi
    if not isinstance(value, dict):
        raise SpecParseError(f"{conv.name}: epitome must be a mapping or RxC string", line, path)
    line = value.get("__line__", line)
    dims = {k: _int_field(value, k, path) for k in ("e_cout", "e_cin", "e_p", "e_q")}
    patch = None
    if "patch" in value:
        p = value["patch"]
        if not isinstance(p, dict):
            raise SpecParseError(f"{conv.name}: patch must be a mapping", line, path)
        patch = PatchDims(**{k: _int_field(p, k, path) for k in ("w", "h", "beta1", "beta2")})
    try:
        epi = make_epitome(conv, patch=patch, xbar_cols=xbar_cols, **dims)
        epi.check_against(conv)
    except DimensionError as exc:
        raise SpecParseError(str(exc), line, path) from None
    return epi


def _parse_xbar(rec, path) -> XbarConfig | None:
    if rec is None:
        return None
    if not isinstance(rec, dict):
        raise SpecParseError("xbar must be a mapping", None, path)
    try:
        return XbarConfig(**_strip_lines(rec))
    except (TypeError, PimError) as exc:
        raise SpecParseError(f"bad xbar section: {exc}", rec.get("__line__"), path) from None


def _parse_layer(rec, xbar, path) -> Layer:
    if not isinstance(rec, dict):
        raise SpecParseError(f"layer record must be a mapping, got {rec!r}", None, path)
    line = rec.get("__line__")
    known = {*_META, "name", "kind", "c_in", "c_out", "k", "k_h", "k_w", "stride", "padding",
             "input_h", "input_w", "weight_bits", "epitome", "wrap"}
    unknown = set(rec) - known
    if unknown:
        raise SpecParseError(f"unknown layer field(s) {sorted(unknown)}",
                             _line_of(rec, sorted(unknown)[0]), path)
    if "name" not in rec:
        raise SpecParseError("missing field 'name'", line, path)
    kind = rec.get("kind", "conv")
    k = _int_field(rec, "k", path, 1)
    try:
        conv = ConvSpec(
            name=str(rec["name"]),
            c_in=_int_field(rec, "c_in", path),
            c_out=_int_field(rec, "c_out", path),
            k_h=_int_field(rec, "k_h", path, k),
            k_w=_int_field(rec, "k_w", path, k),
            stride=_int_field(rec, "stride", path, 1),
            padding=_int_field(rec, "padding", path, 0),
            input_h=_int_field(rec, "input_h", path, 1),
            input_w=_int_field(rec, "input_w", path, 1),
            weight_bits=_int_field(rec, "weight_bits", path, 32),
            kind=kind,
        )
    except DimensionError as exc:
        raise SpecParseError(str(exc), line, path) from None
    wrap = rec.get("wrap", False)
    if not isinstance(wrap, bool):
        raise SpecParseError(f"wrap must be on/off, got {wrap!r}", _line_of(rec, "wrap"), path)
    return Layer(conv, parse_epitome(rec.get("epitome"), conv, xbar, path, _line_of(rec, "epitome")), wrap)


def parse_network(text: str, path: str | None = None) -> Network:
    doc = _load_yaml(text, path)
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SpecParseError("network file must be a mapping", None, path)
    schema = doc.get("schema", NETWORK_SCHEMA)
    if schema != NETWORK_SCHEMA:
        raise SpecParseError(f"unsupported schema {schema!r}, expected {NETWORK_SCHEMA}", _line_of(doc, "schema"), path)
    xbar = _parse_xbar(doc.get("xbar"), path)
    records = doc.get("layers") or []
    if not isinstance(records, list):
        raise SpecParseError("'layers' must be a list", doc.get("__line__"), path)
    layers = tuple(_parse_layer(r, xbar, path) for r in records)
    names = [l.name for l in layers]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise SpecParseError(f"duplicate layer name {dup!r}", None, path)
    return Network(str(doc.get("name", Path(path).stem if path else "network")), layers, xbar)


def load_network(path: str | Path) -> Network:
    """Read a network file; a bare name such as ``resnet50`` falls back to
    the copy shipped with the package."""
    path = Path(path)
    if not path.exists() and not path.suffix and shipped(f"{path.name}.yaml").exists():
        path = shipped(f"{path.name}.yaml")
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecParseError(f"cannot read network file: {exc.strerror}", None, str(path)) from None
    return parse_network(text, str(path))


def shipped(name: str) -> Path:
    """Path of a data file shipped inside the package (e.g. ``resnet50.yaml``)."""
    return Path(str(resources.files("epitome_pim.data").joinpath(name)))


def epitome_record(epi: EpitomeSpec) -> dict:
    p = epi.patch
    return {"e_cout": epi.e_cout, "e_cin": epi.e_cin, "e_p": epi.e_p, "e_q": epi.e_q,
            "patch": {"w": p.w, "h": p.h, "beta1": p.beta1, "beta2": p.beta2}}


def layer_record(layer: Layer) -> dict:
    c = layer.conv
    rec = {"name": c.name, "kind": c.kind, "c_in": c.c_in, "c_out": c.c_out, "k_h": c.k_h,
           "k_w": c.k_w, "stride": c.stride, "padding": c.padding, "input_h": c.input_h,
           "input_w": c.input_w, "weight_bits": c.weight_bits}
    if layer.epitome is not None:
        rec["epitome"] = epitome_record(layer.epitome)
    rec["wrap"] = layer.wrap
    return rec


def dump_network(net: Network) -> str:
    doc = {"schema": NETWORK_SCHEMA, "name": net.name}
    if net.xbar is not None:
        x = net.xbar
        doc["xbar"] = {"rows": x.rows, "cols": x.cols, "cell_bits": x.cell_bits,
                       "polarity": x.polarity, "slicing": x.slicing}
    doc["layers"] = [layer_record(l) for l in net.layers]
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=200)


def apply_uniform(net: Network, rows: int, cols: int, xbar: XbarConfig | None = None) -> Network:
    """Put an ``rows x cols`` epitome on every layer large enough to host one."""
    xbar = xbar or net.xbar
    xbar_cols = xbar.cols if xbar is not None else None
    return net.with_epitomes(uniform_epitome(l.conv, rows, cols, xbar_cols=xbar_cols) for l in net.layers)


DEFAULT_CANDIDATES = ("none",) + tuple(f"{r}x{c}" for r in (256, 512, 1024, 2048) for c in (128, 256, 512))


def resolve_candidates(net: Network, options: dict | None = None, xbar: XbarConfig | None = None,
                       path: str | None = None) -> list[list[EpitomeSpec | None]]:
    """Per-layer candidate lists; options a layer cannot host are dropped."""
    options = options or {}
    xbar = xbar or net.xbar
    default = options.get("default", list(DEFAULT_CANDIDATES))
    per_layer = options.get("layers") or {}
    names = {l.name for l in net.layers}
    stray = set(per_layer) - names - set(_META)
    if stray:
        raise SpecParseError(f"candidates name unknown layer(s) {sorted(stray)}", None, path)
    out = []
    for layer in net.layers:
        choices = per_layer.get(layer.name, default)
        if not isinstance(choices, list):
            raise SpecParseError(f"{layer.name}: candidate choices must be a list", None, path)
        resolved = []
        for opt in choices:
            try:
                epi = parse_epitome(opt, layer.conv, xbar, path)
            except SpecParseError:
                if isinstance(opt, str):
                    continue       # shorthand that this layer cannot host
                raise
            if epi not in resolved:
                resolved.append(epi)
        if not resolved:
            raise SpecParseError(f"{layer.name}: no usable epitome candidate", None, path)
        out.append(resolved)
    return out


def load_candidates(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        doc = _load_yaml(path.read_text(), str(path))
    except OSError as exc:
        raise SpecParseError(f"cannot read candidates file: {exc.strerror}", None, str(path)) from None
    if not isinstance(doc, dict):
        raise SpecParseError("candidates file must be a mapping", None, str(path))
    schema = doc.get("schema", CANDIDATE_SCHEMA)
    if schema != CANDIDATE_SCHEMA:
        raise SpecParseError(f"unsupported schema {schema!r}, expected {CANDIDATE_SCHEMA}", None, str(path))
    return doc
