"""
合成電池退化資料
Synthetic Battery Degradation Generator

每顆電池 b 有初始容量 Q0_b ~ U(1.8, 2.2) Ah 與衰退率 k_b ~ U(0.2, 0.4)。
第 s 步屬於 cycle c = s // steps_per_cycle，cycle 內相位 φ = (s mod steps_per_cycle) / steps_per_cycle：

    cap_c              = Q0_b · exp(−k_b · c / n_cycles)         容量指數衰退（跨 cycle 嚴格遞減）
    fade               = 1 − cap_c / Q0_b
    voltage            = 3.6 + 0.5·sin(2πφ) − 0.3·fade
    current            = 1.5·cos(2πφ)
    charge_capacity    = cap_c · φ
    discharge_capacity = cap_c
    charge_energy      = charge_capacity · voltage
    discharge_energy   = cap_c · (3.7 − 0.2·fade)
    rul                = (T − 1 − s) / steps_per_cycle            每顆電池內為精確的線性遞減

noise > 0 時每個參數加上 noise × (該參數的全距) 的高斯雜訊；rul 不加雜訊。
"""

from typing import Iterable

import numpy as np
import pandas as pd

from backend.autodiff.rng import stream
from backend.data_sources.battery_csv import COLUMNS, PARAMETERS
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

STEPS_PER_CYCLE = 50


def _battery_frame(battery_id: str, steps: int, noise: float, rng: np.random.Generator,
                   steps_per_cycle: int) -> pd.DataFrame:
    q0 = rng.uniform(1.8, 2.2)
    k = rng.uniform(0.2, 0.4)

    s = np.arange(steps)
    cycle = s // steps_per_cycle
    phase = (s % steps_per_cycle) / steps_per_cycle
    n_cycles = max(1, int(np.ceil(steps / steps_per_cycle)))

    cap = q0 * np.exp(-k * cycle / n_cycles)
    fade = 1.0 - cap / q0
    voltage = 3.6 + 0.5 * np.sin(2 * np.pi * phase) - 0.3 * fade
    current = 1.5 * np.cos(2 * np.pi * phase)
    charge_capacity = cap * phase
    channels = {
        'voltage': voltage,
        'current': current,
        'charge_capacity': charge_capacity,
        'discharge_capacity': cap,
        'charge_energy': charge_capacity * voltage,
        'discharge_energy': cap * (3.7 - 0.2 * fade),
    }

    if noise > 0:
        for name in PARAMETERS:
            clean = channels[name]
            span = float(np.ptp(clean)) or 1.0
            channels[name] = clean + noise * span * rng.normal(size=steps)

    frame = pd.DataFrame({
        'battery_id': battery_id,
        'cycle': cycle + 1,
        'step': s % steps_per_cycle,
        **channels,
        'rul': (steps - 1 - s) / steps_per_cycle,
    })
    return frame[COLUMNS]


def synth_degradation(
    n_batteries: int,
    steps: int,
    noise: float = 0.01,
    seed: int = 0,
    steps_per_cycle: int = STEPS_PER_CYCLE
) -> pd.DataFrame:
    """
    產生合成電池資料

    Args:
        n_batteries: 電池數
        steps: 每顆電池的列數
        noise: 相對雜訊強度（0 表示無雜訊）
        seed: 種子（每顆電池使用獨立串流）
        steps_per_cycle: 每個 cycle 的步數

    Returns:
        欄位與 CSV 相同、依 (battery_id, cycle, step) 排序的 DataFrame
    """
    if n_batteries <= 0 or steps <= 0 or steps_per_cycle <= 0:
        raise ValueError("n_batteries、steps、steps_per_cycle 必須為正")
    if noise < 0:
        raise ValueError(f"noise 不可為負，收到 {noise}")

    width = max(3, len(str(n_batteries - 1)))
    frames = [
        _battery_frame(f"B{b:0{width}d}", steps, noise, stream(seed, 'synth', b), steps_per_cycle)
        for b in range(n_batteries)
    ]
    frame = pd.concat(frames, ignore_index=True)
    logger.info(f"🔋 合成 {n_batteries} 顆電池 × {steps} 步 (noise={noise}, seed={seed})")
    return frame


def inject_label_noise(frame: pd.DataFrame, ids: Iterable[str], sigma: float, seed: int = 0) -> pd.DataFrame:
    """
    在指定電池的 rul 加上 N(0, sigma²) 雜訊（異質雜訊實驗用，截斷在 0 以上）

    加雜訊後 rul 不再單調，只能在記憶體中使用，不應寫回 CSV。
    """
    out = frame.copy()
    mask = out['battery_id'].isin(list(ids)).to_numpy()
    rng = stream(seed, 'label_noise')
    noisy = out.loc[mask, 'rul'].to_numpy() + sigma * rng.normal(size=int(mask.sum()))
    out.loc[mask, 'rul'] = np.clip(noisy, 0.0, None)
    return out


if __name__ == "__main__":
    demo = synth_degradation(n_batteries=2, steps=200, noise=0.0, seed=0)
    print(demo.head(10).to_string(index=False))
    print(f"✅ {len(demo)} 列")
