"""JSON model files.

One document describes one network.  The ``family`` tag selects the
layout; everything else is family specific:

``memory``
    ``patterns`` (list of +/-1 rows) or ``letters`` (names from the shipped
    5x5 alphabet), optional ``gamma`` and ``beta``.
``duffing``
    either explicit ``adjacency``, ``eta``, ``chi``, ``rho`` matrices, or
    ``N`` with ``seed`` (plus optional ``radius`` and ``connected``) to
    draw a geometric random graph.
``crn``
    ``species`` and ``reactions`` records, or ``builtin`` naming a shipped
    network.
``generic``
    ``N``, ``n`` and sparse ``terms``: ``{"row", "coef", "powers"}`` with
    ``powers`` mapping state indices to exponents.

An optional ``defaults`` object may carry run settings (``h``, ``method``,
``steps``, ``x0``, ``bounds``) used by the command line when flags are
absent.
"""

import json

import numpy as np

from .exceptions import ValidationError
from .netmodels import (
    CrnSpec,
    DuffingNetworkSpec,
    MemoryNetworkSpec,
    PolynomialSpec,
    crn_from_reactions,
    crn_model,
    duffing_model,
    letter_memory_spec,
    load_builtin_crn,
    memory_model,
    polynomial_model,
    random_duffing_spec,
)

FAMILIES = ("memory", "duffing", "crn", "generic")


def _require(doc, *keys):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ValidationError(f"model document is missing {', '.join(missing)}")


def spec_from_dict(doc):
    """Build the family spec described by ``doc``; returns ``(family, spec)``."""
    if not isinstance(doc, dict):
        raise ValidationError("a model document must be a JSON object")
    family = str(doc.get("family", "")).lower()
    if family not in FAMILIES:
        raise ValidationError(f"unknown model family {doc.get('family')!r}; expected one of {FAMILIES}")
    if family == "memory":
        if "letters" in doc:
            spec = letter_memory_spec(tuple(doc["letters"]), gamma=doc.get("gamma", 0.8))
        else:
            _require(doc, "patterns")
            spec = MemoryNetworkSpec(np.asarray(doc["patterns"], dtype=float), doc.get("gamma", 0.8), doc.get("beta"))
    elif family == "duffing":
        if "adjacency" in doc:
            _require(doc, "eta", "chi", "rho")
            spec = DuffingNetworkSpec(
                np.asarray(doc["adjacency"], dtype=bool),
                np.asarray(doc["eta"], dtype=float),
                np.asarray(doc["chi"], dtype=float),
                np.asarray(doc["rho"], dtype=float),
            )
        else:
            _require(doc, "N")
            spec = random_duffing_spec(
                int(doc["N"]), seed=doc.get("seed", 0), radius=doc.get("radius"), connected=doc.get("connected", False)
            )
    elif family == "crn":
        if "builtin" in doc:
            spec = load_builtin_crn(doc["builtin"])
        elif "reactions" in doc:
            _require(doc, "species")
            spec = crn_from_reactions(doc["species"], doc["reactions"])
        else:
            _require(doc, "reactant_stoich", "product_stoich", "forward_rates", "backward_rates")
            spec = CrnSpec(
                doc["reactant_stoich"], doc["product_stoich"], doc["forward_rates"], doc["backward_rates"],
                species=doc.get("species"),
            )
    else:
        _require(doc, "N", "n", "terms")
        terms = tuple(
            (t["row"], t["coef"], {int(k): int(v) for k, v in t.get("powers", {}).items()}) for t in doc["terms"]
        )
        spec = PolynomialSpec(int(doc["N"]), int(doc["n"]), terms)
    return family, spec


def model_from_dict(doc):
    family, spec = spec_from_dict(doc)
    label = doc.get("label", family)
    build = {"memory": memory_model, "duffing": duffing_model, "crn": crn_model, "generic": polynomial_model}[family]
    return build(spec, label=label)


def spec_to_dict(spec, label=None):
    """Explicit (seed-free) document for a family spec."""
    if isinstance(spec, MemoryNetworkSpec):
        doc = {"family": "memory", "patterns": spec.patterns.tolist(), "gamma": spec.gamma, "beta": spec.beta.tolist()}
    elif isinstance(spec, DuffingNetworkSpec):
        doc = {
            "family": "duffing",
            "adjacency": spec.adjacency.astype(int).tolist(),
            "eta": spec.eta.tolist(),
            "chi": spec.chi.tolist(),
            "rho": spec.rho.tolist(),
        }
    elif isinstance(spec, CrnSpec):
        doc = {
            "family": "crn",
            "reactant_stoich": spec.reactant_stoich.tolist(),
            "product_stoich": spec.product_stoich.tolist(),
            "forward_rates": spec.forward_rates.tolist(),
            "backward_rates": spec.backward_rates.tolist(),
        }
        if spec.species is not None:
            doc["species"] = list(spec.species)
    elif isinstance(spec, PolynomialSpec):
        doc = {
            "family": "generic",
            "N": spec.N,
            "n": spec.n,
            "terms": [{"row": r, "coef": c, "powers": {str(k): v for k, v in dict(p).items()}} for r, c, p in spec.terms],
        }
    else:
        raise ValidationError(f"cannot serialize {type(spec).__name__}")
    if label is not None:
        doc["label"] = label
    return doc


def load_model_document(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc


def load_model(path):
    """Read a model file and return ``(model, defaults)``."""
    doc = load_model_document(path)
    return model_from_dict(doc), dict(doc.get("defaults", {}))


def save_model(spec, path, label=None, defaults=None):
    doc = spec_to_dict(spec, label)
    if defaults:
        doc["defaults"] = defaults
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
