"""Ball-game engine producing badly non-differentiable limit mappings.

Two players alternately nest balls in the space of certified 1-Lipschitz
mappings under the sup metric. Player I (scripted adversary or replay)
offers a ball; the engine shrinks its radius to 2^-k (1 - ||L_k||), then
responds by linearizing the offered center near the level-k net with the
round's target operator and choosing the reply radius

    s_k = min(alpha_k / (k + 1), (r_k - rho_k) / 2),

which keeps s_k < alpha_k / k and certifies that the closed reply ball sits
inside the offered one (rho_k is the analytic distance bound of the
linearization, the authority over the sampled estimate). Operators are
scheduled round-robin. After K rounds the final mapping g_K is within
s_K of the infinite game's limit, and around each level-k net point the
difference quotient against the round's operator at scale alpha_k stays
below 4/k -- the checkable witness bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from mpmath import mp

from .lipfun import (
    AddConst,
    Const,
    LipFun,
    add_const,
    fun_from_dict,
    fun_to_dict,
    sup_dist,
)
from .nets import NetFamily, TargetSet, nested_nets
from .numerics import (
    CONSTRUCTION_DPS,
    LIP_ONE_TOL,
    LipForgeError,
    Scalar,
    as_vector,
    decode_scalar,
    decode_vector,
    encode_scalar,
    encode_vector,
    exact_mpf,
    scalar_min,
    to_float,
)
from .perturb import linearize_near
from .space import Domain, LinearMap, NormKind, norm, unit_directions

GAME_SCHEMA = "lipforge-game/1"

ADVERSARY_KINDS = ("stay", "jitter", "replay")


@dataclass(frozen=True)
class MoveRecord:
    """One completed round: Player I's accepted move and Player II's reply."""

    round_k: int
    op_index: int
    move_kind: str
    move_shift: np.ndarray | None
    move_fun: LipFun | None
    r_offered: Scalar
    r_accepted: Scalar
    reply_fun: LipFun | None
    s: Scalar
    alpha: Scalar
    beta: Scalar | None
    warp_radius: Scalar | None
    rho_bound: Scalar
    rho_sampled: float
    net_size: int


@dataclass
class GameState:
    """Mutable run state; history grows by one record per completed round."""

    domain: Domain
    nets: NetFamily
    operators: tuple[LinearMap, ...]
    dps: int = CONSTRUCTION_DPS
    seed: int = 0
    sup_budget: int = 192
    boundary_samples: int | None = None
    history: list[MoveRecord] = field(default_factory=list)

    @property
    def next_round(self) -> int:
        return len(self.history) + 1

    @property
    def out_dim(self) -> int:
        return self.operators[0].out_dim

    @property
    def out_norm(self) -> NormKind:
        return self.operators[0].out_norm

    def op_index(self, k: int) -> int:
        return (k - 1) % len(self.operators)

    def previous(self) -> tuple[LipFun, Scalar]:
        """Player II's last reply ball; a notional unit ball around the zero
        mapping before the first round."""
        if self.history:
            rec = self.history[-1]
            return rec.reply_fun, rec.s
        return Const(np.zeros(self.out_dim), self.domain.dim), exact_mpf(1)


def _move_distance(f: LipFun, g_prev: LipFun, state: GameState, k: int) -> Scalar:
    """Distance from a move center to the previous reply center.

    Scripted moves are recognized structurally and measured exactly; anything
    else falls back to the sampled sup-distance certificate.
    """
    if f is g_prev:
        return exact_mpf(0)
    if isinstance(f, AddConst) and f.f is g_prev:
        return norm(f.p, state.out_norm)
    return sup_dist(f, g_prev, state.domain, state.sup_budget, state.seed * 31 + k, state.out_norm)


def validate_move(state: GameState, f: LipFun, r: Scalar) -> Scalar:
    """Accept Player I's move, shrinking the radius to 2^-k (1 - ||L_k||).

    For rounds past the first, requires the nesting certificate
    dist(f, previous reply) + r <= previous reply radius.
    """
    k = state.next_round
    if not r > 0:
        raise LipForgeError("move radius must be positive")
    if f.in_dim != state.domain.dim or f.out_dim != state.out_dim:
        raise LipForgeError("move has wrong dimensions")
    if f.lip_cert > 1.0 + LIP_ONE_TOL:
        raise LipForgeError("move center is not certified 1-Lipschitz")
    with mp.workdps(state.dps):
        if k >= 2:
            g_prev, s_prev = state.previous()
            rho = _move_distance(f, g_prev, state, k)
            if exact_mpf(rho) + exact_mpf(r) > exact_mpf(s_prev):
                raise LipForgeError("move not nested in the previous ball")
        L = state.operators[state.op_index(k)]
        cap = exact_mpf(2) ** -k * (1 - exact_mpf(L.op_norm))
        return scalar_min(exact_mpf(r), cap)


def player2_move(state: GameState, f: LipFun, r_accepted: Scalar,
                 move_kind: str = "explicit", move_shift: np.ndarray | None = None,
                 r_offered: Scalar | None = None,
                 keep_move_fun: bool = True) -> MoveRecord:
    """Respond to an accepted move: linearize near the level-k net and pick
    the reply radius. Empty net levels skip the perturbation entirely."""
    k = state.next_round
    gamma = state.nets.level(k) if k <= state.nets.k_max else np.empty((0, state.domain.dim))
    L = state.operators[state.op_index(k)]
    with mp.workdps(state.dps):
        r_mp = exact_mpf(r_accepted)
        if len(gamma) == 0:
            g, alpha = f, r_mp / 2
            beta = warp_radius = None
            rho_bound = exact_mpf(0)
        else:
            res = linearize_near(
                f, gamma, L, r_mp, state.domain,
                dps=state.dps, boundary_samples=state.boundary_samples,
            )
            g, alpha = res.fun, res.alpha
            beta, warp_radius = res.params.beta, res.params.s
            rho_bound = res.rho_bound
        s_k = scalar_min(alpha / (k + 1), (r_mp - rho_bound) / 2)
        if not (s_k > 0 and s_k < alpha / k):
            raise LipForgeError("reply radius failed its bounds")
        rho_hat = sup_dist(g, f, state.domain, state.sup_budget, state.seed * 101 + k, state.out_norm)
        if rho_hat > to_float(rho_bound) + 1e-9:
            raise LipForgeError("sampled distance exceeds the analytic bound")
        record = MoveRecord(
            round_k=k,
            op_index=state.op_index(k),
            move_kind=move_kind,
            move_shift=move_shift,
            move_fun=f if keep_move_fun else None,
            r_offered=r_accepted if r_offered is None else r_offered,
            r_accepted=r_mp,
            reply_fun=g,
            s=s_k,
            alpha=alpha,
            beta=beta,
            warp_radius=warp_radius,
            rho_bound=rho_bound,
            rho_sampled=rho_hat,
            net_size=len(gamma),
        )
    state.history.append(record)
    return record


def adversary(kind: str, state: GameState, replay_rounds: list[dict] | None = None):
    """Player I's scripted move for the upcoming round.

    stay:   recenter on the previous reply with half its radius.
    jitter: previous reply shifted by a constant of norm s/8, radius s/4.
    replay: the recorded move of a stored transcript.
    """
    k = state.next_round
    g_prev, s_prev = state.previous()
    with mp.workdps(state.dps):
        if kind == "stay":
            return g_prev, exact_mpf(s_prev) / 2, "stay", None
        if kind == "jitter":
            direction = unit_directions(1, state.out_dim, state.seed * 977 + k, state.out_norm)[0]
            shift = as_vector([exact_mpf(s_prev) / 8 * exact_mpf(float(v)) for v in direction])
            return add_const(g_prev, shift), exact_mpf(s_prev) / 4, "jitter", shift
        if kind == "replay":
            if replay_rounds is None or k > len(replay_rounds):
                raise LipForgeError("replay exhausted")
            rec = replay_rounds[k - 1]
            move = rec["move"]
            r_off = decode_scalar(rec["r_offered"])
            if move["kind"] == "stay":
                return g_prev, r_off, "stay", None
            if move["kind"] == "jitter":
                shift = decode_vector(move["shift"])
                return add_const(g_prev, shift), r_off, "jitter", shift
            if move["kind"] == "explicit":
                return fun_from_dict(move["fun"]), r_off, "explicit", None
            raise LipForgeError(f"unknown recorded move kind {move['kind']!r}")
    raise LipForgeError(f"unknown adversary kind {kind!r}")


@dataclass(frozen=True)
class GameTranscript:
    """Complete record of a finished run."""

    domain: Domain
    operators: tuple[LinearMap, ...]
    nets: NetFamily
    rounds: tuple[MoveRecord, ...]
    final_fun: LipFun
    tail_bound: Scalar
    adversary_kind: str
    seed: int
    dps: int

    @property
    def k_max(self) -> int:
        return len(self.rounds)

    def operator_for_round(self, k: int) -> LinearMap:
        return self.operators[self.rounds[k - 1].op_index]

    def to_dict(self) -> dict:
        rounds = []
        for rec in self.rounds:
            move: dict = {"kind": rec.move_kind}
            if rec.move_kind == "jitter" and rec.move_shift is not None:
                move["shift"] = encode_vector(rec.move_shift)
            if rec.move_kind == "explicit" and rec.move_fun is not None:
                move["fun"] = fun_to_dict(rec.move_fun)
            rounds.append(
                {
                    "round": rec.round_k,
                    "op_index": rec.op_index,
                    "move": move,
                    "r_offered": encode_scalar(rec.r_offered),
                    "r_accepted": encode_scalar(rec.r_accepted),
                    "s": encode_scalar(rec.s),
                    "alpha": encode_scalar(rec.alpha),
                    "beta": None if rec.beta is None else encode_scalar(rec.beta),
                    "warp_radius": None if rec.warp_radius is None else encode_scalar(rec.warp_radius),
                    "rho_bound": encode_scalar(rec.rho_bound),
                    "rho_sampled": repr(rec.rho_sampled),
                    "net_size": rec.net_size,
                }
            )
        return {
            "schema": GAME_SCHEMA,
            "adversary": self.adversary_kind,
            "seed": self.seed,
            "dps": self.dps,
            "domain": self.domain.encode(),
            "operators": [
                {
                    "matrix": [[repr(float(x)) for x in row] for row in op.float_matrix],
                    "in_norm": op.in_norm.value,
                    "out_norm": op.out_norm.value,
                }
                for op in self.operators
            ],
            "net_levels": [
                [[repr(float(x)) for x in p] for p in lvl] for lvl in self.nets.levels
            ],
            "rounds": rounds,
            "tail_bound": encode_scalar(self.tail_bound),
            "final_fun": fun_to_dict(self.final_fun),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")), encoding="utf-8")


def _load_dict(obj: dict) -> GameTranscript:
    if obj.get("schema") != GAME_SCHEMA:
        raise LipForgeError(f"unknown schema version {obj.get('schema')!r}")
    try:
        domain = Domain.decode(obj["domain"])
        operators = tuple(
            LinearMap(
                np.asarray([[float(x) for x in row] for row in rec["matrix"]], dtype=float),
                NormKind.parse(rec["in_norm"]),
                NormKind.parse(rec["out_norm"]),
            )
            for rec in obj["operators"]
        )
        levels = tuple(
            np.asarray([[float(x) for x in p] for p in lvl], dtype=float)
            if lvl
            else np.empty((0, domain.dim))
            for lvl in obj["net_levels"]
        )
        deltas = tuple(2.0 ** -k for k in range(1, len(levels) + 1))
        nets = NetFamily(levels, deltas)
        rounds = []
        for rec in obj["rounds"]:
            move = rec["move"]
            shift = decode_vector(move["shift"]) if move.get("shift") else None
            move_fun = fun_from_dict(move["fun"]) if move.get("fun") else None
            rounds.append(
                MoveRecord(
                    round_k=int(rec["round"]),
                    op_index=int(rec["op_index"]),
                    move_kind=move["kind"],
                    move_shift=shift,
                    move_fun=move_fun,
                    r_offered=decode_scalar(rec["r_offered"]),
                    r_accepted=decode_scalar(rec["r_accepted"]),
                    reply_fun=None,
                    s=decode_scalar(rec["s"]),
                    alpha=decode_scalar(rec["alpha"]),
                    beta=None if rec["beta"] is None else decode_scalar(rec["beta"]),
                    warp_radius=None if rec["warp_radius"] is None else decode_scalar(rec["warp_radius"]),
                    rho_bound=decode_scalar(rec["rho_bound"]),
                    rho_sampled=float(rec["rho_sampled"]),
                    net_size=int(rec["net_size"]),
                )
            )
        return GameTranscript(
            domain=domain,
            operators=operators,
            nets=nets,
            rounds=tuple(rounds),
            final_fun=fun_from_dict(obj["final_fun"]),
            tail_bound=decode_scalar(obj["tail_bound"]),
            adversary_kind=obj.get("adversary", "replay"),
            seed=int(obj.get("seed", 0)),
            dps=int(obj.get("dps", CONSTRUCTION_DPS)),
        )
    except LipForgeError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise LipForgeError("malformed artifact: bad transcript record") from e


def load_transcript(path) -> GameTranscript:
    p = Path(path)
    if not p.exists():
        raise LipForgeError(f"artifact not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise LipForgeError("malformed artifact") from e
    return _load_dict(obj)


def run_game(
    domain: Domain,
    target: TargetSet,
    operators,
    adversary_kind: str = "stay",
    rounds: int = 8,
    seed: int = 0,
    dps: int = CONSTRUCTION_DPS,
    sup_budget: int = 192,
    boundary_samples: int | None = None,
    replay_transcript: GameTranscript | dict | None = None,
    keep_move_funs: bool = True,
) -> GameTranscript:
    """Play a full K-round game and return the transcript.

    Every operator must have op_norm < 1; they are targeted round-robin.
    The run is deterministic for fixed (target, operators, seed, dps).
    """
    ops = tuple(operators)
    if not ops:
        raise LipForgeError("need at least one target operator")
    if rounds < 1:
        raise LipForgeError("need at least one round")
    shape = (ops[0].out_dim, ops[0].in_dim)
    for op in ops:
        if (op.out_dim, op.in_dim) != shape:
            raise LipForgeError("operators must share their shape")
        if not op.op_norm < 1.0:
            raise LipForgeError(f"operator norm must be < 1 (got {op.op_norm})")
        if op.in_dim != domain.dim:
            raise LipForgeError("operator domain dimension must match the domain")

    replay_rounds = None
    if adversary_kind == "replay":
        if replay_transcript is None:
            raise LipForgeError("replay adversary needs a stored transcript")
        obj = replay_transcript.to_dict() if isinstance(replay_transcript, GameTranscript) else replay_transcript
        replay_rounds = obj["rounds"]
    elif adversary_kind not in ADVERSARY_KINDS:
        raise LipForgeError(f"unknown adversary kind {adversary_kind!r}")

    nets = nested_nets(target, domain, rounds)
    state = GameState(
        domain=domain,
        nets=nets,
        operators=ops,
        dps=dps,
        seed=seed,
        sup_budget=sup_budget,
        boundary_samples=boundary_samples,
    )
    for _ in range(rounds):
        k = state.next_round
        try:
            f, r, kind, shift = adversary(adversary_kind, state, replay_rounds)
            r_acc = validate_move(state, f, r)
            player2_move(
                state, f, r_acc,
                move_kind=kind, move_shift=shift, r_offered=r, keep_move_fun=keep_move_funs,
            )
        except LipForgeError as e:
            raise LipForgeError(f"round {k}: {e}") from e

    last = state.history[-1]
    return GameTranscript(
        domain=domain,
        operators=ops,
        nets=nets,
        rounds=tuple(state.history),
        final_fun=last.reply_fun,
        tail_bound=last.s,
        adversary_kind=adversary_kind,
        seed=seed,
        dps=dps,
    )


@dataclass(frozen=True)
class Witness:
    """A point of round k's reply ball where the construction pins the
    difference quotient to the round's operator at scale alpha_k."""

    center: np.ndarray
    offset: np.ndarray | None
    round_k: int
    alpha: Scalar
    s: Scalar
    op_index: int
    operator: LinearMap

    def point(self) -> np.ndarray:
        """The witness point center + offset, exact in the offset's arithmetic
        at the caller's working precision."""
        if self.offset is None:
            return self.center
        return as_vector([exact_mpf(self.center[i]) + exact_mpf(self.offset[i]) for i in range(len(self.center))])


def witnesses(transcript: GameTranscript, per_round: int = 1, seed: int = 0) -> list[Witness]:
    """Net centers of every round, plus per_round - 1 sampled points strictly
    inside each round's reply ball around its center."""
    if per_round < 1:
        raise LipForgeError("per_round must be >= 1")
    out: list[Witness] = []
    for rec in transcript.rounds:
        k = rec.round_k
        if rec.net_size == 0 or k > transcript.nets.k_max:
            continue
        centers = transcript.nets.level(k)
        L = transcript.operators[rec.op_index]
        for ci, x in enumerate(centers):
            out.append(Witness(x, None, k, rec.alpha, rec.s, rec.op_index, L))
            for j in range(per_round - 1):
                direction = unit_directions(
                    1, len(x), seed * 8191 + k * 131 + ci * 17 + j, transcript.domain.norm
                )[0]
                offset = as_vector([exact_mpf(rec.s) / 2 * exact_mpf(float(v)) for v in direction])
                out.append(Witness(x, offset, k, rec.alpha, rec.s, rec.op_index, L))
    return out
