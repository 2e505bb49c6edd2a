"""HTTP service wrapping the simulator.

Endpoints run the Monte-Carlo engine synchronously and return the
points together with the resolved configuration and its hash, so a thin
client can reproduce or export the run byte-for-byte.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .bits import CrcMode, crc_attach, crc_check
from .errors import AiotPhyError, ConfigError
from .fec import ConvCode, conv_encode, hard_to_soft, viterbi_decode
from .harness import BlerPoint, Link, config_from_mapping, run_bler
from .linecode import ChipSeq, LineScheme, line_decode, line_encode
from .random_access import AccessMode, PagingMsg, simulate_round


class BlerPointModel(BaseModel):
    snr_db: float
    blocks: int
    block_errors: int
    bler: float
    ci95: float

    @classmethod
    def from_point(cls, p: BlerPoint) -> "BlerPointModel":
        return cls(snr_db=p.snr_db, blocks=p.blocks, block_errors=p.block_errors,
                   bler=p.bler, ci95=p.ci95_halfwidth)


class SweepRequestBase(BaseModel):
    tbs: int = Field(20, ge=1, le=1000)
    snr_db: str = "-10:2:30"
    min_blocks: int = Field(2000, ge=100)
    max_block_errors: int = Field(100, ge=1)
    master_seed: int = 0
    channel_profile: Literal["tdl-a", "awgn-only"] = "tdl-a"
    delay_spread_ns: float = 30.0
    device_velocity_kmph: float = 3.0
    carrier_hz: float = 0.9e9
    workers: int | None = None


class R2dBlerRequest(SweepRequestBase):
    m_chips_per_symbol: Literal[1, 2, 4] = 1
    thresholding: Literal["fixed", "adaptive"] = "adaptive"
    combining: Literal["mean", "majority"] = "mean"
    r2d_n_tx: int = Field(2, ge=1, le=2)
    sfo_ppm: float = 0.0


class D2rBlerRequest(SweepRequestBase):
    d2r_n_rx: Literal[1, 2] = 1


class BlerSweepResponse(BaseModel):
    points: list[BlerPointModel]
    config: dict
    config_hash: str


class RaSimRequest(BaseModel):
    n_devices: int = Field(ge=0)
    n_occasions: int = Field(1, ge=1)
    rounds: int = Field(1, ge=1)
    energize_prob: float = Field(1.0, ge=0.0, le=1.0)
    seed: int = 0
    mode: Literal["contention-based", "contention-free"] = "contention-based"
    assigned_occasion: int | None = None


class RaSimResponse(BaseModel):
    rounds: int
    responded: int
    resolved: int
    collided: int
    false_success: int
    no_collision_rounds: int


class CodecRequest(BaseModel):
    op: Literal["crc-attach", "crc-check", "line-encode", "line-decode",
                "conv-encode", "viterbi-decode"]
    bits: str = Field(min_length=1, pattern="^[01]+$")
    crc: Literal["crc6", "crc16"] = "crc6"
    line: str = "manchester"
    constraint_length: int = 7
    rate_denominator: int = 3


class CodecResponse(BaseModel):
    output: str
    detail: dict = {}


def _bits(text: str) -> np.ndarray:
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def _text(bits: np.ndarray) -> str:
    return "".join(str(int(b)) for b in bits)


def _sweep(link: Link, req: SweepRequestBase, extra: dict) -> BlerSweepResponse:
    mapping = {
        "link": link.value,
        "tbs": req.tbs,
        "snr_db": req.snr_db,
        "min_blocks": req.min_blocks,
        "max_block_errors": req.max_block_errors,
        "master_seed": req.master_seed,
        "channel_profile": req.channel_profile,
        "delay_spread_ns": req.delay_spread_ns,
        "device_velocity_kmph": req.device_velocity_kmph,
        "carrier_hz": req.carrier_hz,
        **extra,
    }
    cfg = config_from_mapping(mapping)
    points = run_bler(cfg, n_workers=req.workers)
    return BlerSweepResponse(
        points=[BlerPointModel.from_point(p) for p in points],
        config=cfg.to_dict(), config_hash=cfg.config_hash(),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="aiotphy", version=__version__,
                  description="Ambient-IoT physical layer link simulator")

    @app.exception_handler(ConfigError)
    async def config_error(_, exc):  # noqa: ANN001
        raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/bler/r2d", response_model=BlerSweepResponse)
    def bler_r2d(req: R2dBlerRequest) -> BlerSweepResponse:
        try:
            return _sweep(Link.R2D, req, {
                "m_chips_per_symbol": req.m_chips_per_symbol,
                "thresholding": req.thresholding,
                "combining": "mean" if req.combining == "mean" else "majority",
                "r2d_n_tx": req.r2d_n_tx,
                "sfo_ppm": req.sfo_ppm,
            })
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e))
        except AiotPhyError as e:
            raise HTTPException(status_code=500, detail=str(e))

    @app.post("/bler/d2r", response_model=BlerSweepResponse)
    def bler_d2r(req: D2rBlerRequest) -> BlerSweepResponse:
        try:
            return _sweep(Link.D2R, req, {"d2r_n_rx": req.d2r_n_rx})
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e))
        except AiotPhyError as e:
            raise HTTPException(status_code=500, detail=str(e))

    @app.post("/random-access/simulate", response_model=RaSimResponse)
    def ra_simulate(req: RaSimRequest) -> RaSimResponse:
        try:
            page = PagingMsg(mode=AccessMode(req.mode), n_occasions=req.n_occasions,
                             assigned_occasion=req.assigned_occasion)
            totals = dict(responded=0, resolved=0, collided=0, false_success=0)
            no_collision = 0
            seq = np.random.SeedSequence([req.seed])
            round_seeds = seq.generate_state(req.rounds)
            for r in range(req.rounds):
                stats = simulate_round(req.n_devices, page, req.energize_prob,
                                       seed=int(round_seeds[r]))
                totals["responded"] += stats.responded
                totals["resolved"] += stats.resolved
                totals["collided"] += stats.collided
                totals["false_success"] += stats.false_success
                if stats.collided == 0 and stats.false_success == 0:
                    no_collision += 1
            return RaSimResponse(rounds=req.rounds, no_collision_rounds=no_collision,
                                 **totals)
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e))

    @app.post("/codec", response_model=CodecResponse)
    def codec(req: CodecRequest) -> CodecResponse:
        bits = _bits(req.bits)
        mode = CrcMode.CRC6 if req.crc == "crc6" else CrcMode.CRC16
        try:
            if req.op == "crc-attach":
                return CodecResponse(output=_text(crc_attach(bits, mode)))
            if req.op == "crc-check":
                payload = crc_check(bits, mode)
                if payload is None:
                    return CodecResponse(output="", detail={"crc_ok": False})
                return CodecResponse(output=_text(payload), detail={"crc_ok": True})
            if req.op == "line-encode":
                seq = line_encode(bits, LineScheme(req.line))
                return CodecResponse(output=_text(seq.chips))
            if req.op == "line-decode":
                decoded, violations = line_decode(ChipSeq(bits), LineScheme(req.line))
                return CodecResponse(output=_text(decoded),
                                     detail={"violations": violations})
            code = ConvCode(req.constraint_length, req.rate_denominator)
            if req.op == "conv-encode":
                return CodecResponse(output=_text(conv_encode(bits, code)))
            msg_len = bits.size // code.n_outputs
            decoded = viterbi_decode(hard_to_soft(bits), code, msg_len)
            return CodecResponse(output=_text(decoded))
        except AiotPhyError as e:
            raise HTTPException(status_code=400, detail=str(e))
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))

    return app


app = create_app()
