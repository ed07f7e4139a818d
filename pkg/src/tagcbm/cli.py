"""Command-line entry point: one subcommand per pipeline stage, all writing into a run directory."""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import platform
import sys
from dataclasses import fields
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml

from . import __version__, _kernels
from .ccgp import PretrainConfig
from .conceptspace.llm import FixtureStore, LiveClient, RecordingClient, ReplayClient
from .embed import ConceptSet, load_table
from .evalbench.probe import ProbeReport, leakage_probe
from .evalbench.report import summary_csv
from .evalbench.splits import adversarial_split, ood_split, regular_split
from .evalbench.synth import SynthConfig
from .graphcore import TextAttributedGraph
from .ibgate import GateConfig, GateState, activations_from_embeddings, gate_report, select_topk
from .metrics import metric_report
from .nn.checkpoint import load_params, save_params
from .pipeline import (
    ConceptConfig,
    World,
    annotate_graph,
    collect_concepts,
    embed_split,
    fit_concept_model,
    fit_gate,
    inductive_graph,
    pretrain_encoder,
    score_candidates,
    synthetic_world,
)
from .predictor import PredictorConfig, explain_activations, predict_from_activations, train_predictor, wordcloud_svg

log = logging.getLogger("tagcbm")

REQUIRED = object()


def _section(cls, **overrides) -> dict:
    out = {f.name: getattr(cls(), f.name) for f in fields(cls) if f.name != "seed"}
    out.update(overrides)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {
        "kind": REQUIRED,
        "synthetic": _section(SynthConfig),
        "graph": None,
        "source_graph": None,
        "embeddings": None,
    },
    "llm": {
        "mode": REQUIRED,
        "fixtures": None,
        "model": "gpt-3.5-turbo",
        "endpoint": "https://api.openai.com/v1/chat/completions",
        "max_concurrency": 1,
    },
    "pretrain": _section(PretrainConfig),
    "concepts": _section(ConceptConfig),
    "gate": {"beta": 0.01, **_section(GateConfig)},
    "select": {"K": 8},
    "predictor": _section(PredictorConfig),
    "eval": {"settings": [{"setting": "regular"}]},
    "probe": {"K_values": [5, 10, 20, 40], "seeds": [0],
              "settings": [{"setting": "regular"}, {"setting": "ood", "gamma": 5.0}]},
    "explain": {"instances": []},
}
OPEN_SECTIONS = {"dataset.synthetic.concept_seed", "concepts.max_neighbors"}


class ConfigError(ValueError):
    pass


# --- configuration ------------------------------------------------------------


def _merge(default, given, path: str):
    if isinstance(default, dict):
        if not isinstance(given, dict):
            raise ConfigError(f"'{path}' must be a mapping")
        unknown = sorted(set(given) - set(default))
        if unknown:
            raise ConfigError(f"unknown config key '{_join(path, unknown[0])}'")
        return {k: _merge(v, given[k], _join(path, k)) if k in given else _fill(v, _join(path, k))
                for k, v in default.items()}
    if default is REQUIRED:
        return given
    if default is None or path in OPEN_SECTIONS:
        return given
    if isinstance(default, bool):
        if not isinstance(given, bool):
            raise ConfigError(f"'{path}' must be a boolean")
    elif isinstance(default, (int, float)):
        if isinstance(given, bool) or not isinstance(given, (int, float)):
            raise ConfigError(f"'{path}' must be a number")
        if isinstance(default, int) and not isinstance(given, int):
            raise ConfigError(f"'{path}' must be an integer")
    elif isinstance(default, str) and not isinstance(given, str):
        raise ConfigError(f"'{path}' must be a string")
    elif isinstance(default, list) and not isinstance(given, list):
        raise ConfigError(f"'{path}' must be a list")
    return given


def _fill(default, path: str):
    if default is REQUIRED:
        raise ConfigError(f"missing required config key '{path}'")
    if isinstance(default, dict):
        return {k: _fill(v, _join(path, k)) for k, v in default.items()}
    return copy.deepcopy(default)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _require(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        node = node.get(part) if isinstance(node, dict) else None
    if node is None:
        raise ConfigError(f"missing required config key '{dotted}'")
    return node


def resolve_config(raw: dict, seed: int | None = None, overrides: list[str] = ()) -> dict:
    """Defaults + file + ``--set`` overrides + ``--seed``; validated."""
    raw = copy.deepcopy(raw or {})
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(value)
    if seed is not None:
        raw["seed"] = seed
    cfg = _merge(DEFAULT_CONFIG, raw, "")
    kind = cfg["dataset"]["kind"]
    if kind not in ("synthetic", "files"):
        raise ConfigError(f"'dataset.kind' must be 'synthetic' or 'files', got {kind!r}")
    if kind == "files":
        for key in ("dataset.graph", "dataset.source_graph", "dataset.embeddings"):
            _require(cfg, key)
    mode = cfg["llm"]["mode"]
    if mode not in ("synthetic", "replay", "live"):
        raise ConfigError(f"'llm.mode' must be synthetic, replay or live, got {mode!r}")
    if mode in ("replay", "live"):
        _require(cfg, "llm.fixtures")
    if mode == "synthetic" and kind != "synthetic":
        raise ConfigError("'llm.mode: synthetic' needs 'dataset.kind: synthetic'")
    for i, s in enumerate(cfg["eval"]["settings"] + cfg["probe"]["settings"]):
        _check_setting(s, i)
    return cfg


def _check_setting(s, i):
    if not isinstance(s, dict) or "setting" not in s:
        raise ConfigError(f"settings entry {i} needs a 'setting' key")
    need = {"regular": None, "ood": "gamma", "adversarial": "rho"}
    if s["setting"] not in need:
        raise ConfigError(f"unknown setting {s['setting']!r}")
    if need[s["setting"]] and need[s["setting"]] not in s:
        raise ConfigError(f"missing required config key 'settings[{i}].{need[s['setting']]}'")


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    data = yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, ensure_ascii=False) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def _param_of(s: dict):
    return s.get("gamma", s.get("rho"))


# --- run ----------------------------------------------------------------------


class Run:
    """Lazily computed stages; each stage reuses its artifact when the run directory already has it."""

    def __init__(self, cfg: dict, out_root: str | Path = "runs", fixtures: str | Path | None = None):
        self.cfg = cfg
        self.seed = int(cfg["seed"])
        self.dir = Path(out_root) / config_hash(cfg)
        self._fixtures_override = fixtures
        self._emb_cache: dict = {}

    # bookkeeping
    def prepare(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "config.json").write_text(canonical_json(self.cfg), encoding="utf-8")
        info = {
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "tagcbm": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernel_backend": _kernels.BACKEND,
            "seed": self.seed,
        }
        (self.dir / "run_info.json").write_text(canonical_json(info), encoding="utf-8")

    def _write(self, name: str, obj) -> Path:
        path = self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(obj), encoding="utf-8")
        return path

    # configs
    def _sub(self, cls, section: str, **extra):
        vals = {k: v for k, v in self.cfg[section].items() if k in {f.name for f in fields(cls)}}
        vals = {k: tuple(v) if k == "hidden" and isinstance(v, list) else v for k, v in vals.items()}
        return cls(**vals, seed=self.seed, **extra)

    @property
    def pretrain_config(self) -> PretrainConfig:
        return self._sub(PretrainConfig, "pretrain")

    @property
    def concept_config(self) -> ConceptConfig:
        return self._sub(ConceptConfig, "concepts")

    @property
    def gate_config(self) -> GateConfig:
        return self._sub(GateConfig, "gate")

    @property
    def predictor_config(self) -> PredictorConfig:
        return self._sub(PredictorConfig, "predictor")

    @property
    def beta(self) -> float:
        return float(self.cfg["gate"]["beta"])

    @property
    def K(self) -> int:
        return int(self.cfg["select"]["K"])

    # data and LLM
    @cached_property
    def world(self) -> World:
        ds = self.cfg["dataset"]
        if ds["kind"] == "synthetic":
            syn = dict(ds["synthetic"])
            return synthetic_world(SynthConfig(**syn, seed=self.seed))
        graph = TextAttributedGraph.load(ds["graph"])
        source = TextAttributedGraph.load(ds["source_graph"])
        return World(graph, source, load_table(ds["embeddings"]))

    @cached_property
    def store(self) -> FixtureStore:
        path = self._fixtures_override or self.cfg["llm"]["fixtures"]
        if path is None:
            path = self.dir / "fixtures.jsonl"
        return FixtureStore(path)

    @cached_property
    def client(self):
        llm = self.cfg["llm"]
        if llm["mode"] == "replay":
            return ReplayClient(self.store)
        if llm["mode"] == "live":
            return LiveClient(self.store, llm["model"], llm["endpoint"], max_concurrency=llm["max_concurrency"])
        return RecordingClient(self.world.simulator, self.store)

    # splits
    def split_for(self, s: dict):
        labels = self.world.graph.labels
        if s["setting"] == "regular":
            return regular_split(labels, seed=self.seed), None
        if s["setting"] == "ood":
            return ood_split(labels, float(s["gamma"]), seed=self.seed), None
        split, adv = adversarial_split(self.world.graph, float(s["rho"]), seed=self.seed)
        return split, adv.train_graph

    def _key(self, s: dict):
        return (s["setting"], _param_of(s))

    def embeddings(self, s: dict):
        key = self._key(s)
        if key not in self._emb_cache:
            split, train_graph = self.split_for(s)
            pc = self.pretrain_config
            emb = embed_split(self.world.graph, split, self.encoder(), self.world.table, train_graph,
                              pc.hops, pc.readout)
            self._emb_cache[key] = (split, train_graph, emb)
        return self._emb_cache[key]

    # stages
    def encoder(self):
        path = self.dir / "encoder.ckpt"
        if path.exists():
            return load_params(path)
        res = pretrain_encoder(self.world.source, self.world.table, self.client, self.pretrain_config,
                               self.concept_config.dataset_details)
        self.dir.mkdir(parents=True, exist_ok=True)
        save_params(path, res.params, {"losses": res.losses, "seed": self.seed})
        return res.params

    def candidates_for(self, s: dict) -> ConceptSet:
        split, train_graph, emb = self.embeddings(s)
        prompt_graph = inductive_graph(train_graph if train_graph is not None else self.world.graph, split)
        cc = self.concept_config
        globals_, pool = collect_concepts(prompt_graph, split.train, self.client, cc, self.pretrain_config.hops)
        return score_candidates(self.world.graph, split.train, emb.train, globals_, pool, self.world.table, cc)

    def concepts(self) -> ConceptSet:
        path = self.dir / "concepts.json"
        if path.exists():
            return ConceptSet.from_json(json.loads(path.read_text(encoding="utf-8"))["concepts"])
        cands = self.candidates_for({"setting": "regular"})
        self._write("concepts.json", {"seed": self.seed, "count": len(cands), "concepts": cands.to_json()})
        return cands

    def gate(self) -> tuple[GateState, ConceptSet]:
        path = self.dir / "gate.json"
        cands = self.concepts()
        if path.exists():
            rep = json.loads(path.read_text(encoding="utf-8"))
            state = GateState(np.array([c["logit"] for c in rep["concepts"]]), np.array(rep["selected_order"]))
            return state, cands
        _, _, emb = self.embeddings({"setting": "regular"})
        res = fit_gate(emb, cands, self.world.table, self.beta, self.gate_config)
        select_topk(res.gate, min(self.K, len(cands)))
        self._write("gate.json", gate_report(res.gate, cands, self.beta, self.K, self.seed, res.losses))
        return res.gate, cands

    def selected(self) -> ConceptSet:
        state, cands = self.gate()
        return cands.subset(state.selected)

    def predictor(self):
        path = self.dir / "predictor.ckpt"
        if path.exists():
            return load_params(path)
        chosen = self.selected()
        _, _, emb = self.embeddings({"setting": "regular"})
        table = self.world.table
        a_tr, a_va = (activations_from_embeddings(Z, chosen, table) for Z in (emb.train, emb.val))
        res = train_predictor(a_tr, emb.y_train, a_va, emb.y_val, self.predictor_config, emb.n_classes)
        save_params(path, res.classifier, {"best_epoch": res.best_epoch, "best_val_f1": res.best_val_f1,
                                           "concepts": list(chosen.concepts), "seed": self.seed})
        return res.classifier

    def evaluate(self) -> dict:
        results = []
        for s in self.cfg["eval"]["settings"]:
            K = int(s.get("K", self.K))
            setting = {"setting": s["setting"], "param": _param_of(s), "K": K, "seed": self.seed}
            if s["setting"] == "regular" and K == self.K:
                chosen = self.selected()
                _, _, emb = self.embeddings(s)
                a_te = activations_from_embeddings(emb.test, chosen, self.world.table)
                pred, _ = predict_from_activations(a_te, self.predictor())
                report = metric_report(pred, emb.y_test, emb.n_classes, setting)
            else:
                cands = self.concepts() if s["setting"] == "regular" else self.candidates_for(s)
                _, _, emb = self.embeddings(s)
                fit = fit_concept_model(emb, cands, self.world.table, K, self.beta, self.gate_config,
                                        self.predictor_config, setting)
                chosen = cands.subset(fit.selected)
                report = fit.report
            results.append({**setting, "selected": list(chosen.concepts), "report": report.to_json()})
        out = {"seed": self.seed, "results": results}
        self._write("metrics.json", out)
        records = [{**{k: r[k] for k in ("setting", "param", "K", "seed")},
                    "macro_f1": r["report"]["macro_f1"], "bacc": r["report"]["bacc"]} for r in results]
        (self.dir / "metrics.csv").write_text(summary_csv(records), encoding="utf-8")
        return out

    def explain(self, ids=None) -> list[Path]:
        chosen = self.selected()
        clf = self.predictor()
        split, _, emb = self.embeddings({"setting": "regular"})
        ids = list(ids if ids else self.cfg["explain"]["instances"]) or split.test[:5].tolist()
        test_pos = {int(u): i for i, u in enumerate(split.test)}
        from .ibgate import embed_instances
        pc = self.pretrain_config
        written = []
        for node in ids:
            node = self.world.graph.check_node(node)
            if node in test_pos:
                z = emb.test[test_pos[node]][None, :]
            else:
                z = embed_instances(self.world.graph, [node], self.encoder(), self.world.table, pc.hops, pc.readout)
            a = activations_from_embeddings(z, chosen, self.world.table).values[0]
            report = explain_activations(node, a, chosen, clf)
            written.append(self._write(f"explanations/{node}.json", report.to_json()))
            (self.dir / "explanations" / f"{node}.svg").write_text(wordcloud_svg(report), encoding="utf-8")
        return written

    def probe(self) -> ProbeReport:
        p = self.cfg["probe"]
        pc = self.pretrain_config
        settings = [(s["setting"], _param_of(s)) for s in p["settings"]]
        if any(name == "adversarial" for name, _ in settings):
            raise ConfigError("the probe runs regular and ood settings only")
        report = leakage_probe(self.world.graph, self.world.table, self.encoder(), self.concepts(), p["K_values"],
                               p["seeds"], settings, self.beta, self.gate_config, self.predictor_config,
                               pc.hops, pc.readout)
        self._write("probe.json", report.to_json())
        (self.dir / "probe.csv").write_text(summary_csv(report.csv_records()), encoding="utf-8")
        return report

    def record(self) -> int:
        """Issue every LLM request the configured stages need, through the simulator, into the store."""
        if self.world.simulator is None:
            raise ConfigError("recording needs 'dataset.kind: synthetic'")
        client = RecordingClient(self.world.simulator, self.store)
        annotate_graph(self.world.source, client, self.concept_config.dataset_details, k=self.pretrain_config.hops)
        settings = [{"setting": "regular"}] + list(self.cfg["eval"]["settings"])
        for s in settings:
            split, train_graph = self.split_for(s)
            prompt_graph = inductive_graph(train_graph if train_graph is not None else self.world.graph, split)
            collect_concepts(prompt_graph, split.train, client, self.concept_config, self.pretrain_config.hops)
        return len(self.store)


# --- commands -----------------------------------------------------------------


def cmd_pretrain(run: Run):
    run.encoder()
    return run.dir / "encoder.ckpt"


def cmd_concepts(run: Run):
    run.concepts()
    return run.dir / "concepts.json"


def cmd_gate(run: Run):
    run.gate()
    return run.dir / "gate.json"


def cmd_train(run: Run):
    run.predictor()
    return run.dir / "predictor.ckpt"


def cmd_eval(run: Run):
    run.evaluate()
    return run.dir / "metrics.json"


def cmd_explain(run: Run, ids=None):
    run.explain(ids)
    return run.dir / "explanations"


def cmd_probe(run: Run):
    run.probe()
    return run.dir / "probe.json"


def cmd_record(run: Run):
    n = run.record()
    log.info("fixture store holds %d responses", n)
    return run.store.path


COMMANDS = {
    "pretrain": cmd_pretrain,
    "concepts": cmd_concepts,
    "gate": cmd_gate,
    "train": cmd_train,
    "eval": cmd_eval,
    "explain": cmd_explain,
    "probe": cmd_probe,
    "record": cmd_record,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tagcbm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tagcbm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "pretrain": "contrastive encoder pretraining",
        "concepts": "build the candidate concept set",
        "gate": "train concept gates and select the top K",
        "train": "train the label predictor on the selected concepts",
        "eval": "metrics for every configured setting",
        "explain": "explanation JSON and word-cloud SVG per instance",
        "probe": "random-concept leakage probe",
        "record": "write simulated LLM fixtures for a synthetic config",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML or JSON config file")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default="runs", help="root directory for run directories")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. gate.beta=0.1")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "explain":
            p.add_argument("--ids", type=int, nargs="*", default=None, help="node ids to explain")
        if name == "record":
            p.add_argument("--fixtures", default=None, help="fixture file to write (default: llm.fixtures)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(load_config(args.config), args.seed, args.set)
        run = Run(cfg, args.out, getattr(args, "fixtures", None))
        run.prepare()
        fn = COMMANDS[args.command]
        out = fn(run, args.ids) if args.command == "explain" else fn(run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure must surface as a non-zero exit
        log.debug("stage failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
