"""Stable Diffusion inpainting through ``diffusers``.

Defaults reproduce the published LDFA setting: ``stabilityai/stable-diffusion-2-inpainting``
weights, empty prompt, guidance scale 1, Euler-ancestral sampling, 50 steps.

Config keys under ``[inpainter]``: ``model``, ``device``, ``dtype`` ("float16" or
"float32").
"""

from __future__ import annotations

import numpy as np

from anonypipe.backends import Capabilities, InpaintBackend

DEFAULT_MODEL = "stabilityai/stable-diffusion-2-inpainting"
_SCHEDULERS = {
    "k_euler_a": "EulerAncestralDiscreteScheduler",
    "k_euler": "EulerDiscreteScheduler",
    "ddim": "DDIMScheduler",
}


class DiffusersInpainter(InpaintBackend):
    def __init__(self, model: str = DEFAULT_MODEL, device: str = "cuda", dtype: str = "float16"):
        import diffusers
        import torch

        self._torch = torch
        self._diffusers = diffusers
        self.device = device
        self.pipe = diffusers.StableDiffusionInpaintPipeline.from_pretrained(
            model, torch_dtype=getattr(torch, dtype)
        ).to(device)
        self.pipe.set_progress_bar_config(disable=True)
        self._sampler = None
        self.capabilities = Capabilities(
            name=f"diffusers:{model}",
            version=diffusers.__version__,
            safe_for_concurrent_calls=False,
            deterministic=True,
            native_resolution=512,
        )

    def _use_sampler(self, sampler_id: str) -> None:
        if sampler_id == self._sampler:
            return
        try:
            cls = getattr(self._diffusers, _SCHEDULERS[sampler_id])
        except KeyError:
            raise ValueError(f"unsupported sampler {sampler_id!r}; known: {sorted(_SCHEDULERS)}") from None
        self.pipe.scheduler = cls.from_config(self.pipe.scheduler.config)
        self._sampler = sampler_id

    def inpaint(self, patch, mask, *, prompt="", cfg_scale=1.0, sampler_id="k_euler_a", inference_steps=50, seed=0):
        from PIL import Image

        self._use_sampler(sampler_id)
        h, w = patch.shape[:2]
        generator = self._torch.Generator(device=self.device).manual_seed(int(seed))
        result = self.pipe(
            prompt=prompt,
            image=Image.fromarray(patch),
            mask_image=Image.fromarray(np.asarray(mask, dtype=np.uint8) * 255),
            guidance_scale=cfg_scale,
            num_inference_steps=inference_steps,
            generator=generator,
            height=h,
            width=w,
        ).images[0]
        out = np.array(result.convert("RGB").resize((w, h)), dtype=np.uint8)
        # the VAE round trip touches every pixel; restore everything outside the mask
        mask = np.asarray(mask, dtype=bool)
        out[~mask] = patch[~mask]
        return out


def create_inpainter(options: dict) -> DiffusersInpainter:
    return DiffusersInpainter(
        model=options.get("model", DEFAULT_MODEL),
        device=options.get("device", "cuda"),
        dtype=options.get("dtype", "float16"),
    )
