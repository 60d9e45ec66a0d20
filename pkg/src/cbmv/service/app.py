"""FastAPI application exposing the pipeline.

Domain failures map to HTTP statuses the CLI translates back into its
exit codes: configuration and usage problems answer 422, unreadable or
inconsistent data answers 400.  Endpoints are synchronous and
deterministic; every random choice flows from the request's config.
"""

from __future__ import annotations

import os

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import PipelineConfig
from ..errors import ConfigError, DataError
from ..fileio import (
    load_image,
    load_mask,
    read_kitti_png,
    read_pfm,
    save_cost_volume,
    save_image,
    save_mask,
    write_kitti_png,
    write_pfm,
)
from ..confidence import save_feature_volume
from ..forest import load_model, save_model
from ..metrics import evaluate
from ..pipeline import compute_feature_volume, predict_pair, train_on_pairs
from ..synth import Rect, SynthSpec, synth_stereo
from . import schemas


def read_disparity(path):
    """PFM or 16-bit PNG, chosen by extension."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        return read_pfm(path)
    if ext == ".png":
        return read_kitti_png(path)
    raise DataError(f"{path}: disparity files must be .pfm or .png")


def create_app() -> FastAPI:
    app = FastAPI(title="cbmv", version=__version__)

    @app.exception_handler(ConfigError)
    async def config_error(request, exc):
        return JSONResponse(status_code=422,
                            content={"detail": str(exc), "kind": "config"})

    @app.exception_handler(DataError)
    async def data_error(request, exc):
        return JSONResponse(status_code=400,
                            content={"detail": str(exc), "kind": "data"})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        spec = SynthSpec(
            width=req.width, height=req.height, d_max=req.d_max, d_bg=req.d_bg,
            rects=[Rect(r.x0, r.y0, r.width, r.height, r.disparity) for r in req.rects],
            noise_sigma=req.noise_sigma, gain=req.gain, seed=req.seed,
        )
        left, right, gt, occ = synth_stereo(spec)
        os.makedirs(req.out_dir, exist_ok=True)
        paths = {
            "left": os.path.join(req.out_dir, f"{req.prefix}_left.png"),
            "right": os.path.join(req.out_dir, f"{req.prefix}_right.png"),
            "gt": os.path.join(req.out_dir, f"{req.prefix}_gt.pfm"),
            "occlusion": os.path.join(req.out_dir, f"{req.prefix}_occ.png"),
        }
        save_image(left, paths["left"])
        save_image(right, paths["right"])
        write_pfm(gt, paths["gt"])
        save_mask(occ, paths["occlusion"])
        return schemas.SynthResponse(**paths)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        if not req.pairs:
            raise ConfigError("at least one training pair is required")
        config = PipelineConfig.from_flat(req.config)
        triples = [
            (load_image(p.left), load_image(p.right), read_disparity(p.gt))
            for p in req.pairs
        ]
        model, summary = train_on_pairs(triples, config, threads=req.threads)
        out_dir = os.path.dirname(req.model_out)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        save_model(model, req.model_out)
        return schemas.TrainResponse(model_path=req.model_out,
                                     summary=schemas.TrainSummary(**summary))

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        config = PipelineConfig.from_flat(req.config)
        left = load_image(req.left)
        right = load_image(req.right)
        model = load_model(req.model)
        stages = {} if req.dump_stages else None
        result = predict_pair(left, right, model, config,
                              skip_optimization=req.skip_optimization,
                              collect_stages=stages)
        out_dir = os.path.dirname(req.out_prefix)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        resp = schemas.PredictResponse(pfm=req.out_prefix + ".pfm",
                                       png=req.out_prefix + ".png")
        write_pfm(result["disparity"], resp.pfm)
        write_kitti_png(result["disparity"], resp.png)
        if req.dump_cbmv:
            save_cost_volume(result["cbmv"], req.dump_cbmv)
            resp.cbmv_dump = req.dump_cbmv
        if req.dump_stages:
            os.makedirs(req.dump_stages, exist_ok=True)
            for name, plane in stages.items():
                write_pfm(plane, os.path.join(req.dump_stages, f"{name}.pfm"))
            resp.stages_dir = req.dump_stages
        return resp

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_cmd(req: schemas.EvalRequest):
        pred = read_disparity(req.pred)
        gt = read_disparity(req.gt)
        mask = load_mask(req.mask) if req.mask else None
        report = evaluate(pred, gt, mask=mask)
        return schemas.EvalResponse(
            mask_kind=report.mask_kind,
            pixel_count=report.pixel_count,
            bad={f"{tol:g}": v for tol, v in sorted(report.bad.items())},
            avg_err=report.avg_err,
            rms_err=report.rms_err,
            text=report.to_text(),
            block=report.to_block(),
        )

    @app.post("/features", response_model=schemas.FeaturesResponse)
    def features(req: schemas.FeaturesRequest):
        config = PipelineConfig.from_flat(req.config)
        left = load_image(req.left)
        right = load_image(req.right)
        _, fv = compute_feature_volume(left, right, config)
        out_dir = os.path.dirname(req.out)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        save_feature_volume(fv, req.out)
        return schemas.FeaturesResponse(features=req.out, height=fv.height,
                                        width=fv.width, d_max=fv.d_max)

    return app
