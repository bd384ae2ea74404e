"""Round-driven simulations of centralized and federated training.

* centralized: every agency ships its raw shard to the coordinator, which
  trains one model on the pooled data.
* flavor1 (synchronized online federation): each round, every agency trains
  the current global model for ``local_steps`` mini-batches; the server
  averages the results and broadcasts the average.
* flavor2 (model relay): a single model visits the agencies in ascending id
  order and is trained for ``local_epochs`` full epochs at each stop.
* flavor 3 is either of the above after a limited data exchange
  (``exchange_per_class > 0``).

Every run is a pure function of its config and data.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as ds
from .cost import CostParams
from .nn import (
    ModelParams,
    NetworkSpec,
    average_params,
    effective_batch_size,
    evaluate,
    init_params,
    train_local,
)
from .simnet import SERVER, TrafficLedger, record_transfer, simulated_time

log = logging.getLogger(__name__)

FLAVORS = ("centralized", "flavor1", "flavor2")
PARTITIONS = ("random", "by_class")
WEIGHTINGS = ("equal", "size")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FederationConfig:
    flavor: str = "flavor1"
    agencies: int = 10
    partition: str = "random"
    exchange_per_class: int = 0
    rounds: int = 50
    passes: int | None = None
    local_steps: int = 1
    local_epochs: int = 1
    batch_size: int = 128
    lr: float = 0.1
    seed: int = 0
    hidden_layers: tuple[int, ...] = (128,)
    model_bytes: int | None = None
    weighting: str = "equal"
    k_n: float = 1.0
    k_s: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ConfigError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        if self.partition not in PARTITIONS:
            raise ConfigError(f"partition must be one of {PARTITIONS}, got {self.partition!r}")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.agencies < 1:
            raise ConfigError("agencies must be >= 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.passes is not None and self.passes < 1:
            raise ConfigError("passes must be >= 1")
        if self.local_steps < 1 or self.local_epochs < 1:
            raise ConfigError("local_steps and local_epochs must be >= 1")
        if self.exchange_per_class < 0:
            raise ConfigError("exchange_per_class must be >= 0")
        if self.exchange_per_class and self.flavor == "centralized":
            raise ConfigError("data exchange applies to flavor1 or flavor2, not centralized")
        if self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("batch_size must be >= 1 and lr > 0")
        if self.model_bytes is not None and self.model_bytes < 1:
            raise ConfigError("model_bytes must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.k_n < 0 or not self.k_s > 0:
            raise ConfigError("need k_n >= 0 and k_s > 0")
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))

    @property
    def visits(self) -> int:
        return self.passes if self.passes is not None else self.agencies

    def network_for(self, data) -> NetworkSpec:
        return NetworkSpec((data.features.shape[1], *self.hidden_layers, data.class_count))

    def model_size(self, spec: NetworkSpec) -> int:
        return self.model_bytes if self.model_bytes is not None else 8 * spec.param_count

    def cost_params(self) -> CostParams:
        return CostParams(k_n=self.k_n, k_s=self.k_s, agencies=self.agencies, model_ratio=0.0)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    accuracy: float
    loss: float
    bytes_up: int
    bytes_down: int
    sim_time: float


@dataclass
class AgencyState:
    id: int
    data: ds.Dataset | None
    params: ModelParams


@dataclass
class RunResult(Sequence):
    """The per-round records of one run, plus the final model and ledger."""

    records: list[RoundRecord]
    params: ModelParams
    ledger: TrafficLedger
    models: list[ModelParams] = field(default_factory=list, repr=False)

    def __getitem__(self, i):
        return self.records[i]

    def __len__(self):
        return len(self.records)

    @property
    def final(self) -> RoundRecord:
        return self.records[-1]


def stream_seed(seed: int, node: int) -> tuple[int, int]:
    """Seed of node ``node``'s mini-batch stream. The centralized trainer uses node 0."""
    return (seed, node)


def examples_in_steps(n: int, batch_size: int, start_step: int, steps: int) -> int:
    """Examples consumed by steps ``start_step ..`` of a stream over ``n`` examples."""
    per_epoch = -(-n // batch_size)
    last = n - (per_epoch - 1) * batch_size
    total = 0
    for step in range(start_step, start_step + steps):
        total += last if step % per_epoch == per_epoch - 1 else batch_size
    return total


class _Recorder:
    """Accumulates ledger, compute phases and RoundRecords for one run."""

    def __init__(self, config, spec, test, unit_bytes, ledger=None, keep_models=False):
        self.config = config
        self.spec = spec
        self.test = test
        self.unit_bytes = unit_bytes
        self.ledger = ledger if ledger is not None else TrafficLedger()
        self.cp = config.cost_params()
        self.phases: list[dict] = []
        self.records: list[RoundRecord] = []
        self.keep_models = keep_models
        self.models: list[ModelParams] = []

    def phase(self, units: dict):
        self.phases.append(units)

    def units(self, examples: int, bytes_per_example: int) -> float:
        return examples * bytes_per_example / self.unit_bytes

    def record(self, params: ModelParams):
        acc, loss = evaluate(params, self.spec, self.test)
        self.records.append(RoundRecord(
            round=len(self.records) + 1,
            accuracy=acc,
            loss=loss,
            bytes_up=self.ledger.bytes_up,
            bytes_down=self.ledger.bytes_down,
            sim_time=simulated_time(self.ledger, self.cp, self.phases, self.unit_bytes),
        ))
        if self.keep_models:
            self.models.append(params)

    def result(self, params):
        return RunResult(self.records, params, self.ledger, self.models)


def _shard_list(shards) -> list:
    if isinstance(shards, dict):
        return [shards[a] for a in sorted(shards)]
    return list(shards)


def _unit_bytes(shards, agencies) -> float:
    total = sum(len(s) * s.bytes_per_example() for s in shards if s is not None)
    return total / agencies


def run_centralized(config: FederationConfig, train, test, *, keep_models=False) -> RunResult:
    """Pool the agencies' shards at the coordinator and train there.

    ``train`` is either the list of agency shards (each shipped once, in
    agency order) or an already pooled dataset shipped as one transfer.
    """
    shards = [train] if isinstance(train, ds.Dataset) else _shard_list(train)
    pool = shards[0] if len(shards) == 1 else ds.concat(shards)
    spec = config.network_for(pool)
    bpe = pool.bytes_per_example()
    rec = _Recorder(config, spec, test, _unit_bytes(shards, config.agencies),
                    keep_models=keep_models)
    for a, shard in enumerate(shards):
        record_transfer(rec.ledger, a, SERVER, len(shard) * bpe, "data")

    params = init_params(spec, config.seed)
    b = effective_batch_size(len(pool), config.batch_size)
    tau = config.local_steps
    for r in range(config.rounds):
        params = train_local(params, spec, pool, tau, b, config.lr,
                             stream_seed(config.seed, 0), start_step=r * tau)
        rec.phase({SERVER: rec.units(examples_in_steps(len(pool), b, r * tau, tau), bpe)})
        rec.record(params)
    return rec.result(params)


def _client_update(config, spec, agency: AgencyState, global_params: ModelParams, r: int):
    tau = config.local_steps
    if agency.data is None:
        log.warning("agency %d has no data; returning its params unchanged", agency.id)
        return global_params, 0
    b = effective_batch_size(len(agency.data), config.batch_size)
    out = train_local(global_params, spec, agency.data, tau, b, config.lr,
                      stream_seed(config.seed, agency.id), start_step=r * tau)
    return out, examples_in_steps(len(agency.data), b, r * tau, tau)


def run_flavor1(config: FederationConfig, shards, test, *, ledger=None, unit_bytes=None,
                keep_models=False) -> RunResult:
    """Synchronized rounds of local training followed by server-side averaging."""
    shards = _shard_list(shards)
    if len(shards) != config.agencies:
        raise ConfigError(f"{len(shards)} shards for {config.agencies} agencies")
    ref = next(s for s in shards if s is not None)
    spec = config.network_for(ref)
    bpe = ref.bytes_per_example()
    mbytes = config.model_size(spec)
    if unit_bytes is None:
        unit_bytes = _unit_bytes(shards, config.agencies)
    rec = _Recorder(config, spec, test, unit_bytes, ledger, keep_models)

    global_params = init_params(spec, config.seed)
    agencies = [AgencyState(a, s, global_params) for a, s in enumerate(shards)]
    if config.weighting == "size":
        weights = [float(len(s)) if s is not None else 1.0 for s in shards]
    else:
        weights = [1.0] * len(shards)
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for r in range(config.rounds):
            for ag in agencies:
                record_transfer(rec.ledger, SERVER, ag.id, mbytes, "model")
            if pool is None:
                results = [_client_update(config, spec, ag, global_params, r) for ag in agencies]
            else:
                futures = [pool.submit(_client_update, config, spec, ag, global_params, r)
                           for ag in agencies]
                results = [f.result() for f in futures]
            for ag, (params, _) in zip(agencies, results):
                ag.params = params
                record_transfer(rec.ledger, ag.id, SERVER, mbytes, "model")
            rec.phase({ag.id: rec.units(used, bpe) for ag, (_, used) in zip(agencies, results)})
            global_params = average_params(
                (ag.params, w) for ag, w in zip(agencies, weights)
            )
            for ag in agencies:
                ag.params = global_params
            rec.record(global_params)
    finally:
        if pool is not None:
            pool.shutdown()
    return rec.result(global_params)


def run_flavor2(config: FederationConfig, shards, test, *, ledger=None, unit_bytes=None,
                keep_models=False) -> RunResult:
    """Relay one model through the agencies, training to completion at each."""
    shards = _shard_list(shards)
    if len(shards) != config.agencies:
        raise ConfigError(f"{len(shards)} shards for {config.agencies} agencies")
    ref = next(s for s in shards if s is not None)
    spec = config.network_for(ref)
    bpe = ref.bytes_per_example()
    mbytes = config.model_size(spec)
    if unit_bytes is None:
        unit_bytes = _unit_bytes(shards, config.agencies)
    rec = _Recorder(config, spec, test, unit_bytes, ledger, keep_models)

    params = init_params(spec, config.seed)
    visits_done = [0] * config.agencies
    holder = SERVER
    for v in range(config.visits):
        a = v % config.agencies
        record_transfer(rec.ledger, holder, a, mbytes, "model")
        holder = a
        shard = shards[a]
        if shard is None:
            log.warning("agency %d has no data; model passes through untrained", a)
            rec.phase({a: 0.0})
        else:
            b = effective_batch_size(len(shard), config.batch_size)
            steps = config.local_epochs * -(-len(shard) // b)
            start = visits_done[a] * steps
            params = train_local(params, spec, shard, steps, b, config.lr,
                                 stream_seed(config.seed, a), start_step=start)
            rec.phase({a: rec.units(examples_in_steps(len(shard), b, start, steps), bpe)})
        visits_done[a] += 1
        rec.record(params)
    return rec.result(params)


def make_plan(config: FederationConfig, data: ds.Dataset) -> ds.PartitionPlan:
    if config.partition == "by_class":
        return ds.partition_by_class(data, config.agencies)
    return ds.partition_random(data, config.agencies, config.seed)


def run_flavor3(config: FederationConfig, data: ds.Dataset, test, plan=None, *,
                keep_models=False) -> RunResult:
    """Exchange ``exchange_per_class`` examples per class, then run the base flavor."""
    if config.flavor not in ("flavor1", "flavor2"):
        raise ConfigError("data exchange needs flavor1 or flavor2 as the base flavor")
    if plan is None:
        plan = make_plan(config, data)
    k = config.exchange_per_class
    shards = ds.apply_exchange(data, plan, k, config.seed)
    ledger = exchange_transfers(data, plan, k, config.seed) if k else TrafficLedger()
    unit_bytes = len(data) * data.bytes_per_example() / config.agencies
    runner = run_flavor1 if config.flavor == "flavor1" else run_flavor2
    return runner(config, shards, test, ledger=ledger, unit_bytes=unit_bytes,
                  keep_models=keep_models)


def exchange_transfers(data: ds.Dataset, plan: ds.PartitionPlan, k: int, seed: int) -> TrafficLedger:
    """Ledger of the agency-to-agency example transfers made by ``apply_exchange``."""
    ledger = TrafficLedger()
    owner = np.empty(len(data), dtype=np.int64)
    for a, idx in plan.assignments.items():
        owner[idx] = a
    bpe = data.bytes_per_example()
    for a, received in ds.exchange_indices(data, plan, k, seed).items():
        counts = np.bincount(owner[received], minlength=plan.agencies)
        for src in range(plan.agencies):
            if counts[src]:
                record_transfer(ledger, src, a, int(counts[src]) * bpe, "data")
    return ledger


def sweep_exchange(config: FederationConfig, data: ds.Dataset, test, k_values) -> dict:
    """Final accuracy of flavor 1 for each exchange amount, all runs on one seed."""
    base = replace(config, flavor="flavor1")
    plan = make_plan(base, data)
    out = {}
    for k in k_values:
        run = run_flavor3(replace(base, exchange_per_class=int(k)), data, test, plan)
        out[int(k)] = run.final.accuracy
    return out


def validate(config: FederationConfig, train: ds.Dataset):
    """Reject impossible combinations before any training starts."""
    if config.agencies > len(train):
        raise ConfigError(f"{config.agencies} agencies for {len(train)} examples")
    if config.partition == "by_class" and config.agencies > train.class_count:
        raise ConfigError(
            f"by_class partition needs agencies <= classes "
            f"({config.agencies} > {train.class_count})"
        )
    k = config.exchange_per_class
    if k:
        hist = train.class_histogram()
        smallest = hist[hist > 0].min()
        if k > smallest:
            raise ConfigError(f"exchange_per_class={k} exceeds the smallest class ({smallest})")


def run_experiment(config: FederationConfig, train: ds.Dataset, test: ds.Dataset, *,
                   keep_models=False) -> RunResult:
    validate(config, train)
    plan = make_plan(config, train)
    if config.flavor == "centralized":
        return run_centralized(config, plan.shards(train), test, keep_models=keep_models)
    return run_flavor3(config, train, test, plan, keep_models=keep_models)
