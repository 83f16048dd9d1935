"""Ground-truth PMSM model: electrical dynamics, torque map, frame transforms,
mechanical load, and bounded speed-profile generation.

The machine is the classical two-phase balanced model in a static frame,

    di_s/dt = (-R i_s + u_s)/L - omega * flux * J zeta / L,
    dzeta/dt = omega * J zeta,

with ``zeta`` the electrical rotor direction on the unit circle, ``omega``
the electrical speed (pole_pairs times the mechanical speed) and torque
``T = 1.5 * p * flux * (zeta1*i2 - zeta2*i1)``.  No saliency, saturation or
inverter effects are modeled.

Speed profiles are piecewise hold/ramp/sinusoid segments.  A ``SpeedProfile``
additionally declares magnitude and slew bounds and refuses profiles that
cross zero speed, change sign, or exceed the declared bounds anywhere.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import so2


class ProfileError(ValueError):
    pass


@dataclass
class PlantParams:
    """Motor constants. Defaults match a small multirotor drive."""

    R: float = 0.108            # stator resistance [ohm]
    L: float = 30.62e-6         # stator inductance [H]
    flux: float = 1.309e-3      # rotor flux amplitude [Wb]
    pole_pairs: int = 12
    inertia: float = 1.4e-4     # load inertia [kg m^2]
    load_kind: str = "quadratic"   # none | constant | quadratic
    load_coeff: float = 2.7915e-7  # [N m] or [N m s^2/rad^2] depending on kind

    def __post_init__(self):
        if min(self.R, self.L, self.flux, self.inertia) <= 0.0:
            raise ValueError("R, L, flux and inertia must be positive")
        if self.pole_pairs < 1:
            raise ValueError("pole_pairs must be >= 1")
        if self.load_kind not in ("none", "constant", "quadratic"):
            raise ValueError(f"unknown load_kind {self.load_kind!r}")
        if self.load_coeff < 0.0:
            raise ValueError("load_coeff must be >= 0")


@dataclass
class PlantState:
    i_s: np.ndarray = field(default_factory=lambda: np.zeros(2))  # stator current, static frame [A]
    zeta: np.ndarray = field(default_factory=lambda: so2.IDENTITY.copy())
    omega_m: float = 0.0        # mechanical speed [rad/s]


@dataclass
class PlantDerivative:
    di_s: np.ndarray
    zeta_rate: float            # electrical [rad/s]
    domega_m: float             # zero in exogenous-speed mode


LOAD_NONE, LOAD_CONSTANT, LOAD_QUADRATIC = 0, 1, 2
_LOAD_CODES = {"none": LOAD_NONE, "constant": LOAD_CONSTANT, "quadratic": LOAD_QUADRATIC}


def load_code(kind):
    return _LOAD_CODES[kind]


@njit(cache=True)
def current_rhs(i_s, u_s, omega_e, zeta, R, L, flux):
    emf = omega_e * flux
    d0 = (-R * i_s[0] + u_s[0] + emf * zeta[1]) / L
    d1 = (-R * i_s[1] + u_s[1] - emf * zeta[0]) / L
    return np.array([d0, d1])


@njit(cache=True)
def electric_torque(zeta, i_s, pole_pairs, flux):
    return 1.5 * pole_pairs * flux * (zeta[0] * i_s[1] - zeta[1] * i_s[0])


@njit(cache=True)
def load_torque(omega_m, kind, coeff):
    if kind == 1:
        return coeff if omega_m >= 0.0 else -coeff
    if kind == 2:
        return coeff * omega_m * abs(omega_m)
    return 0.0


@njit(cache=True)
def to_frame(zeta_r, v):
    """Express a static-frame 2-vector in the rotating frame (C^T v)."""
    return np.array([zeta_r[0] * v[0] + zeta_r[1] * v[1],
                     -zeta_r[1] * v[0] + zeta_r[0] * v[1]])


@njit(cache=True)
def from_frame(zeta_r, v):
    """Map a rotating-frame 2-vector back to the static frame (C v)."""
    return np.array([zeta_r[0] * v[0] - zeta_r[1] * v[1],
                     zeta_r[1] * v[0] + zeta_r[0] * v[1]])


def plant_derivative(state, u_s, params, omega_e=None):
    """Time derivative of the plant state.

    With ``omega_e`` given the electrical speed is exogenous and the
    mechanical state is ignored; otherwise the mechanical balance
    ``inertia * domega_m = T_el - T_load`` is active and
    ``omega_e = pole_pairs * omega_m``.
    """
    i_s = np.asarray(state.i_s, dtype=float)
    u = np.asarray(u_s, dtype=float)
    if not (np.all(np.isfinite(i_s)) and np.all(np.isfinite(u))
            and np.all(np.isfinite(state.zeta))):
        raise ValueError("non-finite plant input")
    if omega_e is None:
        omega_e = params.pole_pairs * state.omega_m
        t_el = electric_torque(state.zeta, i_s, params.pole_pairs, params.flux)
        t_ld = load_torque(state.omega_m, load_code(params.load_kind), params.load_coeff)
        domega_m = (t_el - t_ld) / params.inertia
    else:
        if not math.isfinite(omega_e):
            raise ValueError("non-finite exogenous speed")
        domega_m = 0.0
    di = current_rhs(i_s, u, omega_e, np.asarray(state.zeta, dtype=float),
                     params.R, params.L, params.flux)
    return PlantDerivative(di_s=di, zeta_rate=float(omega_e), domega_m=float(domega_m))


def torque(state, params):
    return float(electric_torque(np.asarray(state.zeta, float),
                                 np.asarray(state.i_s, float),
                                 params.pole_pairs, params.flux))


def rotating_frame_rhs(i_r, u_r, omega_e, zeta, zeta_r, omega_r, params):
    """Current derivative written directly in an arbitrary rotating frame.

    Used as the independent oracle for the frame-equivalence property:
    integrating this must agree with transforming the static-frame solution.
    """
    rel = to_frame(zeta_r, zeta)            # C^T[zeta_r] zeta
    j_rel = np.array([-rel[1], rel[0]])
    j_ir = np.array([-i_r[1], i_r[0]])
    return ((-params.R * i_r + u_r) / params.L
            - (omega_e * params.flux / params.L) * j_rel
            - omega_r * j_ir)


# ---------------------------------------------------------------------------
# piecewise speed / reference profiles
# ---------------------------------------------------------------------------

SEG_HOLD, SEG_RAMP, SEG_SINUSOID = 0, 1, 2


@dataclass(frozen=True)
class Hold:
    value: float
    duration: float


@dataclass(frozen=True)
class Ramp:
    start: float
    end: float
    duration: float


@dataclass(frozen=True)
class Sinusoid:
    offset: float
    amplitude: float
    frequency: float            # [Hz]
    duration: float
    phase: float = 0.0          # value = offset + amplitude*sin(2*pi*f*t + phase)


def _segment_row(seg, t0):
    if isinstance(seg, Hold):
        return [SEG_HOLD, t0, t0 + seg.duration, seg.value, 0.0, 0.0, 0.0]
    if isinstance(seg, Ramp):
        return [SEG_RAMP, t0, t0 + seg.duration, seg.start, seg.end, 0.0, 0.0]
    if isinstance(seg, Sinusoid):
        return [SEG_SINUSOID, t0, t0 + seg.duration, seg.offset, seg.amplitude,
                2.0 * math.pi * seg.frequency, seg.phase]
    raise ProfileError(f"unknown segment type {type(seg).__name__}")


@njit(cache=True)
def profile_eval(table, t):
    """Evaluate (value, one-sided derivative) of a segment table at time t.

    Times are clamped to the table span, so a lookup one integrator step
    past the end is harmless.
    """
    n = table.shape[0]
    if t <= table[0, 1]:
        t = table[0, 1]
    if t >= table[n - 1, 2]:
        t = table[n - 1, 2]
    k = 0
    for i in range(n):
        k = i
        if t < table[i, 2]:
            break
    kind = int(table[k, 0])
    t0 = table[k, 1]
    t1 = table[k, 2]
    if kind == 0:
        return table[k, 3], 0.0
    if kind == 1:
        rate = (table[k, 4] - table[k, 3]) / (t1 - t0)
        return table[k, 3] + rate * (t - t0), rate
    ph = table[k, 5] * (t - t0) + table[k, 6]
    return (table[k, 3] + table[k, 4] * math.sin(ph),
            table[k, 4] * table[k, 5] * math.cos(ph))


def _segment_extremes(row):
    """Exact (min value, max value, max |slope|) of one table row."""
    kind, t0, t1, a, b, c, d = row
    if kind == SEG_HOLD:
        return a, a, 0.0
    if kind == SEG_RAMP:
        lo, hi = min(a, b), max(a, b)
        return lo, hi, abs((b - a) / (t1 - t0))
    # sinusoid: candidates are the endpoints plus interior critical phases
    span = c * (t1 - t0)
    cands = [d, d + span]
    k0 = math.ceil((d - math.pi / 2.0) / math.pi)
    ph = math.pi / 2.0 + k0 * math.pi
    while ph <= d + span:
        if ph >= d:
            cands.append(ph)
        ph += math.pi
    vals = [a + b * math.sin(p) for p in cands]
    # slope b*c*cos(.): peak |slope| attained at multiples of pi inside the span
    k0 = math.ceil(d / math.pi)
    has_peak = (k0 * math.pi) <= d + span
    slope_cands = [abs(b * c * math.cos(d)), abs(b * c * math.cos(d + span))]
    if has_peak:
        slope_cands.append(abs(b * c))
    return min(vals), max(vals), max(slope_cands)


class SegmentProfile:
    """Continuous piecewise hold/ramp/sinusoid signal (no bound constraints)."""

    def __init__(self, segments, t_start=0.0):
        if not segments:
            raise ProfileError("profile needs at least one segment")
        rows = []
        t0 = float(t_start)
        prev_end = None
        for seg in segments:
            if seg.duration <= 0.0:
                raise ProfileError("segment duration must be positive")
            row = _segment_row(seg, t0)
            v_begin, _ = profile_eval(np.array([row]), row[1])
            if prev_end is not None:
                if abs(v_begin - prev_end) > 1e-6 + 1e-9 * abs(prev_end):
                    raise ProfileError(
                        f"discontinuous joint at t={t0:g}: {prev_end:g} -> {v_begin:g}")
            prev_end, _ = profile_eval(np.array([row]), row[2])
            rows.append(row)
            t0 = row[2]
        self.table = np.array(rows, dtype=float)
        self.segments = tuple(segments)

    @property
    def t_start(self):
        return float(self.table[0, 1])

    @property
    def t_end(self):
        return float(self.table[-1, 2])

    @property
    def duration(self):
        return self.t_end - self.t_start

    def value(self, t):
        if t < self.t_start - 1e-12 or t > self.t_end + 1e-12:
            raise ProfileError(f"t={t:g} outside profile span")
        return profile_eval(self.table, float(t))

    def sample(self, ts):
        ts = np.asarray(ts, dtype=float)
        out_v = np.empty_like(ts)
        out_d = np.empty_like(ts)
        for i, t in enumerate(ts.ravel()):
            v, d = profile_eval(self.table, t)
            out_v.ravel()[i] = v
            out_d.ravel()[i] = d
        return out_v, out_d

    def scaled(self, factor):
        segs = []
        for seg in self.segments:
            if isinstance(seg, Hold):
                segs.append(Hold(seg.value * factor, seg.duration))
            elif isinstance(seg, Ramp):
                segs.append(Ramp(seg.start * factor, seg.end * factor, seg.duration))
            else:
                segs.append(Sinusoid(seg.offset * factor, seg.amplitude * factor,
                                     seg.frequency, seg.duration, seg.phase))
        return type(self)(segs, **self._scale_kwargs(factor))

    def _scale_kwargs(self, factor):
        return {"t_start": self.t_start}


class SpeedProfile(SegmentProfile):
    """Segment profile with declared speed bounds, suitable as true rotor speed.

    Rejects profiles whose exact extremes cross zero, change sign, leave
    [min_abs, max_abs] in magnitude, or exceed the slew bound max_rate.
    """

    def __init__(self, segments, min_abs, max_abs, max_rate, t_start=0.0):
        super().__init__(segments, t_start=t_start)
        if not (0.0 < min_abs <= max_abs):
            raise ProfileError("need 0 < min_abs <= max_abs")
        if max_rate < 0.0:
            raise ProfileError("max_rate must be >= 0")
        self.min_abs = float(min_abs)
        self.max_abs = float(max_abs)
        self.max_rate = float(max_rate)
        lo = math.inf
        hi = -math.inf
        slew = 0.0
        for row in self.table:
            v_lo, v_hi, s = _segment_extremes(row)
            lo = min(lo, v_lo)
            hi = max(hi, v_hi)
            slew = max(slew, s)
        if lo <= 0.0 <= hi:
            raise ProfileError("speed profile crosses or touches zero")
        sign = 1.0 if lo > 0.0 else -1.0
        mag_lo, mag_hi = (lo, hi) if sign > 0 else (-hi, -lo)
        tol = 1e-9
        if mag_lo < self.min_abs * (1 - tol) or mag_hi > self.max_abs * (1 + tol):
            raise ProfileError(
                f"profile magnitude range [{mag_lo:g}, {mag_hi:g}] violates "
                f"declared [{self.min_abs:g}, {self.max_abs:g}]")
        if slew > self.max_rate * (1 + tol) + 1e-12:
            raise ProfileError(f"profile slew {slew:g} exceeds declared {self.max_rate:g}")
        self.sign = sign

    def value(self, t):
        v, d = super().value(t)
        assert self.min_abs * (1 - 1e-9) <= abs(v) <= self.max_abs * (1 + 1e-9), \
            "speed profile left its declared bounds"
        return v, d

    def _scale_kwargs(self, factor):
        f = abs(factor)
        return {"min_abs": self.min_abs * f, "max_abs": self.max_abs * f,
                "max_rate": self.max_rate * f, "t_start": self.t_start}


RPM_TO_RAD_S = 2.0 * math.pi / 60.0


def benchmark_speed_segments():
    """Default 2 s test profile in mechanical rpm: hold, ramp, hold, two
    sinusoidal periods between half and full nominal speed."""
    return [
        Hold(3500.0, 0.4),
        Ramp(3500.0, 7000.0, 0.4),
        Hold(7000.0, 0.2),
        Sinusoid(5250.0, 1750.0, 2.0, 1.0, phase=math.pi / 2.0),
    ]


def benchmark_speed_profile(units="rpm-mech", pole_pairs=12):
    """The default profile in the requested units.

    units: 'rpm-mech', 'rad/s-mech' or 'rad/s-elec'.
    """
    prof = SpeedProfile(benchmark_speed_segments(),
                        min_abs=3400.0, max_abs=7100.0, max_rate=25000.0)
    if units == "rpm-mech":
        return prof
    if units == "rad/s-mech":
        return prof.scaled(RPM_TO_RAD_S)
    if units == "rad/s-elec":
        return prof.scaled(RPM_TO_RAD_S * pole_pairs)
    raise ProfileError(f"unknown units {units!r}")
