"""Organ-failure scoring over 24h-window extrema.

Six subsystems each contribute 0-4 points. Missing inputs score a subsystem
0. Mean arterial pressure falls back to (SBP + 2*DBP)/3 and the oxygenation
ratio to PaO2/FiO2 when the derived quantity is not supplied directly;
FiO2 above 1 is read as a percentage. The two highest respiratory grades
require the mechanical-ventilation flag.
"""

import json
from dataclasses import dataclass

from .errors import DataError

#: fields that must be non-negative when present
_NON_NEGATIVE = (
    "gcs_total", "gcs_eye", "gcs_motor", "gcs_verbal", "map", "sbp", "dbp",
    "dopamine", "dobutamine", "epinephrine", "norepinephrine",
    "pao2", "fio2", "pf_ratio", "platelets", "bilirubin", "creatinine",
    "urine_output",
)


@dataclass
class SofaInput:
    """Worst-case values over a 24h window; None marks a missing measurement.

    Units: pressures mmHg, vasopressor doses ug/kg/min, platelets 10^3/ul,
    bilirubin and creatinine mg/dl, urine output ml/day. ``fio2`` is a
    fraction (values > 1 are treated as percent).
    """

    stay_id: str = ""
    gcs_total: float | None = None
    gcs_eye: float | None = None
    gcs_motor: float | None = None
    gcs_verbal: float | None = None
    map: float | None = None
    sbp: float | None = None
    dbp: float | None = None
    dopamine: float | None = None
    dobutamine: float | None = None
    epinephrine: float | None = None
    norepinephrine: float | None = None
    pao2: float | None = None
    fio2: float | None = None
    pf_ratio: float | None = None
    mech_vent: bool = False
    platelets: float | None = None
    bilirubin: float | None = None
    creatinine: float | None = None
    urine_output: float | None = None

    def __post_init__(self):
        for name in _NON_NEGATIVE:
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DataError(f"{name} must be non-negative, got {v}")

    @classmethod
    def from_jsonable(cls, obj: dict) -> "SofaInput":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class SofaScore:
    cns: int
    cardio: int
    resp: int
    coag: int
    liver: int
    renal: int

    @property
    def total(self) -> int:
        return self.cns + self.cardio + self.resp + self.coag + self.liver + self.renal


def _gcs(inp: SofaInput) -> float | None:
    if inp.gcs_eye is not None and inp.gcs_motor is not None and inp.gcs_verbal is not None:
        return min(15.0, max(3.0, inp.gcs_eye + inp.gcs_motor + inp.gcs_verbal))
    if inp.gcs_total is not None:
        return min(15.0, max(3.0, inp.gcs_total))
    return None


def _map(inp: SofaInput) -> float | None:
    if inp.map is not None:
        return inp.map
    if inp.sbp is not None and inp.dbp is not None:
        return (inp.sbp + 2.0 * inp.dbp) / 3.0
    return None


def _pf(inp: SofaInput) -> float | None:
    if inp.pf_ratio is not None:
        return inp.pf_ratio
    if inp.pao2 is not None and inp.fio2 is not None and inp.fio2 > 0:
        fio2 = inp.fio2 / 100.0 if inp.fio2 > 1.0 else inp.fio2
        return inp.pao2 / fio2
    return None


def score_cns(gcs: float | None) -> int:
    if gcs is None:
        return 0
    if gcs >= 15:
        return 0
    if gcs >= 13:
        return 1
    if gcs >= 10:
        return 2
    if gcs >= 6:
        return 3
    return 4


def score_cardio(map_value, dopamine, dobutamine, epinephrine, norepinephrine) -> int:
    score = 0
    if map_value is not None and map_value < 70:
        score = 1
    if dobutamine is not None and dobutamine > 0:
        score = max(score, 2)
    if dopamine is not None and dopamine > 0:
        if dopamine > 15:
            score = max(score, 4)
        elif dopamine > 5:
            score = max(score, 3)
        else:
            score = max(score, 2)
    for dose in (epinephrine, norepinephrine):
        if dose is not None and dose > 0:
            score = max(score, 4 if dose > 0.1 else 3)
    return score


def score_resp(pf: float | None, mech_vent: bool) -> int:
    if pf is None:
        return 0
    if pf < 100 and mech_vent:
        return 4
    if pf < 200 and mech_vent:
        return 3
    if pf < 300:
        return 2
    if pf < 400:
        return 1
    return 0


def score_coag(platelets: float | None) -> int:
    if platelets is None:
        return 0
    if platelets < 20:
        return 4
    if platelets < 50:
        return 3
    if platelets < 100:
        return 2
    if platelets < 150:
        return 1
    return 0


def score_liver(bilirubin: float | None) -> int:
    if bilirubin is None:
        return 0
    if bilirubin >= 12.0:
        return 4
    if bilirubin >= 6.0:
        return 3
    if bilirubin >= 2.0:
        return 2
    if bilirubin >= 1.2:
        return 1
    return 0


def score_renal(creatinine: float | None, urine_output: float | None) -> int:
    score = 0
    if creatinine is not None:
        if creatinine >= 5.0:
            score = 4
        elif creatinine >= 3.5:
            score = 3
        elif creatinine >= 2.0:
            score = 2
        elif creatinine >= 1.2:
            score = 1
    if urine_output is not None:
        if urine_output < 200:
            score = max(score, 4)
        elif urine_output < 500:
            score = max(score, 3)
    return score


def sofa_score(inp: SofaInput) -> SofaScore:
    """Total 0-24 and the six 0-4 subscores for one scoring window."""
    return SofaScore(
        cns=score_cns(_gcs(inp)),
        cardio=score_cardio(_map(inp), inp.dopamine, inp.dobutamine,
                            inp.epinephrine, inp.norepinephrine),
        resp=score_resp(_pf(inp), inp.mech_vent),
        coag=score_coag(inp.platelets),
        liver=score_liver(inp.bilirubin),
        renal=score_renal(inp.creatinine, inp.urine_output),
    )


def score_ndjson_to_csv(in_path, out_path):
    """Score an NDJSON stream of input records into a CSV table."""
    rows = []
    with open(in_path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                inp = SofaInput.from_jsonable(json.loads(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise DataError(f"{in_path}: bad record on line {i + 1}: {exc}") from exc
            s = sofa_score(inp)
            rows.append((inp.stay_id, s.cns, s.cardio, s.resp, s.coag,
                         s.liver, s.renal, s.total))
    if not rows:
        raise DataError(f"{in_path}: no records")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("stay_id,cns,cardio,resp,coag,liver,renal,total\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    return len(rows)
