"""Hot simulation kernels: numba-jitted inner loop with a pure-numpy fallback.

Both backends execute the identical update sequence with identical
floating-point expression ordering, so a simulation produces bit-identical
event logs, membrane traces and drive spike trains on either path. Set
``SPIKELOOP_DISABLE_NUMBA=1`` in the environment to force the numpy path
(the numba path is the default whenever numba imports cleanly).

Update order within one timestep:

1. decay all synaptic traces (exact exponential factors, precomputed)
2. deliver spikes emitted on the previous step (one-step synaptic delay),
   presynaptic neurons visited in ascending index order
3. generate external drive spikes for this step (regular or Poisson) and
   add them to the per-neuron input traces
4. integrate the membrane of every non-refractory neuron (forward Euler)
5. decay adaptation currents
6. threshold test; firing neurons emit an event timestamped at the current
   step, reset, bump adaptation, enter refractoriness

Randomness for Poisson drives is counter-based (splitmix64 over a per-drive
stream key and the global step index), which makes spike trains reproducible,
independent of chunking, and identical across backends.
"""

from __future__ import annotations

import os

import numpy as np

U64 = np.uint64
_SM_GAMMA = U64(0x9E3779B97F4A7C15)
_SM_MIX1 = U64(0xBF58476D1CE4E5B9)
_SM_MIX2 = U64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


def _splitmix64_np(x):
    """splitmix64 finalizer over a uint64 array (wrapping arithmetic)."""
    z = x + _SM_GAMMA
    z = (z ^ (z >> U64(30))) * _SM_MIX1
    z = (z ^ (z >> U64(27))) * _SM_MIX2
    return z ^ (z >> U64(31))


def drive_stream_key(seed: int, neuron: int, polarity: int) -> np.uint64:
    """Derive the per-drive RNG stream key used by both backends."""
    with np.errstate(over="ignore"):
        base = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
        salt = np.array([np.uint64(2 * neuron + polarity + 1)], dtype=np.uint64)
        k = _splitmix64_np(base * _SM_GAMMA + salt)
    return k[0]


# ---------------------------------------------------------------------------
# numpy reference backend
# ---------------------------------------------------------------------------

def run_steps_numpy(
    n_steps, step0, dt_us, dt_s,
    mem_coef, gdt, v_rest, threshold, v_reset, adapt_inc, adapt_decay, refrac_steps,
    class_eff, class_decay, in_eff, in_decay, plastic_decay,
    conn_indptr, conn_post, conn_cls,
    pl_indptr, pl_post, pl_w,
    drive_rate, drive_pattern, drive_key, drive_pexp,
    v, adapt, refrac_left, traces, in_traces, plastic_trace, pending,
    ev_id, ev_ts, probe_idx, probe_v,
):
    n = v.shape[0]
    n_ev = 0
    n_cls = class_eff.shape[0]
    for s in range(n_steps):
        g = step0 + s

        for c in range(n_cls):
            traces[:, c] *= class_decay[c]
        in_traces[:, 0] *= in_decay[0]
        in_traces[:, 1] *= in_decay[1]
        plastic_trace *= plastic_decay

        for pre in np.nonzero(pending)[0]:
            j0, j1 = conn_indptr[pre], conn_indptr[pre + 1]
            if j1 > j0:
                posts = conn_post[j0:j1]
                cls = conn_cls[j0:j1]
                traces[posts, cls] += class_eff[cls]
            k0, k1 = pl_indptr[pre], pl_indptr[pre + 1]
            if k1 > k0:
                plastic_trace[pl_post[k0:k1]] += pl_w[k0:k1]
        pending[:] = False

        for p in (0, 1):
            rate = drive_rate[:, p]
            driven = rate > 0.0
            if not driven.any():
                continue
            reg = driven & (drive_pattern[:, p] == 0)
            if reg.any():
                idx = np.nonzero(reg)[0]
                a = rate[idx] * dt_s
                cnt = np.floor(a * (g + 1.0)) - np.floor(a * g)
                hit = cnt > 0.0
                if hit.any():
                    in_traces[idx[hit], p] += cnt[hit] * in_eff[p]
            poi = driven & (drive_pattern[:, p] == 1)
            if poi.any():
                idx = np.nonzero(poi)[0]
                with np.errstate(over="ignore"):
                    bits = _splitmix64_np(drive_key[idx, p] + U64(g) * _SM_GAMMA)
                u = (bits >> U64(11)) * _INV_2_53
                pexp = drive_pexp[idx, p]
                multi = u >= pexp
                if multi.any():
                    cnt = np.zeros(idx.shape[0])
                    for j in np.nonzero(multi)[0]:
                        lam = float(rate[idx[j]]) * dt_s
                        uu = float(u[j])
                        prob = float(pexp[j])
                        cum = prob
                        k = 0
                        while uu >= cum and k < 64:
                            k += 1
                            prob = prob * (lam / k)
                            cum = cum + prob
                        cnt[j] = k
                    hit = cnt > 0.0
                    in_traces[idx[hit], p] += cnt[hit] * in_eff[p]

        i_syn = traces[:, 0].copy()
        for c in range(1, n_cls):
            i_syn = i_syn + traces[:, c]
        i_syn = i_syn + in_traces[:, 0]
        i_syn = i_syn + in_traces[:, 1]
        i_syn = i_syn + plastic_trace

        active = refrac_left == 0
        v[active] = v[active] + (
            mem_coef[active] * (v_rest[active] - v[active])
            + gdt[active] * (i_syn[active] - adapt[active])
        )
        refrac_left[~active] -= 1

        adapt *= adapt_decay

        fired = active & (v >= threshold)
        if fired.any():
            ids = np.nonzero(fired)[0]
            ts = g * dt_us
            for i in ids:
                ev_id[n_ev] = i
                ev_ts[n_ev] = ts
                n_ev += 1
            v[ids] = v_reset[ids]
            adapt[ids] += adapt_inc[ids]
            refrac_left[ids] = refrac_steps[ids]
            pending[ids] = True

        for j in range(probe_idx.shape[0]):
            probe_v[s, j] = v[probe_idx[j]]

    return n_ev


# ---------------------------------------------------------------------------
# numba backend (same sequence, scalar loops)
# ---------------------------------------------------------------------------

def _build_numba_kernel():
    from numba import njit

    @njit(cache=True)
    def _splitmix64(x):
        z = x + _SM_GAMMA
        z = (z ^ (z >> U64(30))) * _SM_MIX1
        z = (z ^ (z >> U64(27))) * _SM_MIX2
        return z ^ (z >> U64(31))

    @njit(cache=True)
    def run_steps(
        n_steps, step0, dt_us, dt_s,
        mem_coef, gdt, v_rest, threshold, v_reset, adapt_inc, adapt_decay, refrac_steps,
        class_eff, class_decay, in_eff, in_decay, plastic_decay,
        conn_indptr, conn_post, conn_cls,
        pl_indptr, pl_post, pl_w,
        drive_rate, drive_pattern, drive_key, drive_pexp,
        v, adapt, refrac_left, traces, in_traces, plastic_trace, pending,
        ev_id, ev_ts, probe_idx, probe_v,
    ):
        n = v.shape[0]
        n_ev = 0
        n_cls = class_eff.shape[0]
        for s in range(n_steps):
            g = step0 + s

            for i in range(n):
                for c in range(n_cls):
                    traces[i, c] *= class_decay[c]
                in_traces[i, 0] *= in_decay[0]
                in_traces[i, 1] *= in_decay[1]
                plastic_trace[i] *= plastic_decay

            for pre in range(n):
                if pending[pre]:
                    for j in range(conn_indptr[pre], conn_indptr[pre + 1]):
                        c = conn_cls[j]
                        traces[conn_post[j], c] += class_eff[c]
                    for j in range(pl_indptr[pre], pl_indptr[pre + 1]):
                        plastic_trace[pl_post[j]] += pl_w[j]
                    pending[pre] = False

            for i in range(n):
                for p in range(2):
                    rate = drive_rate[i, p]
                    if rate <= 0.0:
                        continue
                    cnt = 0.0
                    if drive_pattern[i, p] == 0:
                        a = rate * dt_s
                        cnt = np.floor(a * (g + 1.0)) - np.floor(a * g)
                    else:
                        bits = _splitmix64(drive_key[i, p] + U64(g) * _SM_GAMMA)
                        u = (bits >> U64(11)) * _INV_2_53
                        pexp = drive_pexp[i, p]
                        if u >= pexp:
                            lam = rate * dt_s
                            prob = pexp
                            cum = prob
                            k = 0
                            while u >= cum and k < 64:
                                k += 1
                                prob = prob * (lam / k)
                                cum = cum + prob
                            cnt = float(k)
                    if cnt > 0.0:
                        in_traces[i, p] += cnt * in_eff[p]

            ts = g * dt_us
            for i in range(n):
                active = refrac_left[i] == 0
                if active:
                    i_syn = traces[i, 0]
                    for c in range(1, n_cls):
                        i_syn = i_syn + traces[i, c]
                    i_syn = i_syn + in_traces[i, 0]
                    i_syn = i_syn + in_traces[i, 1]
                    i_syn = i_syn + plastic_trace[i]
                    v[i] = v[i] + (
                        mem_coef[i] * (v_rest[i] - v[i])
                        + gdt[i] * (i_syn - adapt[i])
                    )
                else:
                    refrac_left[i] -= 1
                adapt[i] *= adapt_decay[i]
                if active and v[i] >= threshold[i]:
                    ev_id[n_ev] = i
                    ev_ts[n_ev] = ts
                    n_ev += 1
                    v[i] = v_reset[i]
                    adapt[i] += adapt_inc[i]
                    refrac_left[i] = refrac_steps[i]
                    pending[i] = True

            for j in range(probe_idx.shape[0]):
                probe_v[s, j] = v[probe_idx[j]]

        return n_ev

    return run_steps


_DISABLED = os.environ.get("SPIKELOOP_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on",
)

run_steps_numba = None
if not _DISABLED:
    try:
        run_steps_numba = _build_numba_kernel()
    except ImportError:  # pragma: no cover - exercised only without numba
        run_steps_numba = None

ACTIVE_BACKEND = "numba" if run_steps_numba is not None else "numpy"


def get_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return ACTIVE_BACKEND


def run_steps(*args):
    if run_steps_numba is not None:
        return run_steps_numba(*args)
    return run_steps_numpy(*args)
