"""
實驗設定
Experiment Configuration

扁平的 key/value JSON，欄位同 TrainConfig；未知鍵直接拒絕。
命令列可用 --set key=value 覆寫（依欄位型別轉換）。
"""

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Union

from backend.data_sources.battery_csv import PARAMETERS
from backend.errors import ConfigError
from backend.models.bgn import TEMPORAL_MODES, VARIANTS, ModelSpec
from backend.models.grapher import ABLATIONS

NLL_REDUCTIONS = ('mean', 'sum')


@dataclass(frozen=True)
class TrainConfig:
    """訓練與實驗參數（預設值為完整訓練協定搭配桌機規模的切窗）"""

    # 模型
    variant: str = 'bgn'                  # bgn | bgn_ue
    ablation: str = 'none'                # none | fcg | no_embeddings | no_features | no_gnn | no_rnn
    embedding_dim: int = 32
    hidden_dim: int = 32
    gamma: float = 0.05
    dropout: float = 0.2
    temporal_mode: str = 'window_sequence'

    # 最佳化
    lr: float = 1e-3
    batch_size: int = 48
    max_epochs: int = 100
    scheduler_patience: int = 10
    early_stop_patience: int = 20
    grad_clip: float = 5.0                # 0 表示不裁剪
    nll_reduction: str = 'mean'           # BGN-UE 的 NLL 是否除以批次大小

    # 切窗
    window: int = 64
    stride: int = 16
    seq_len: int = 8

    # 實驗協定
    seed: int = 0
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    k_folds: int = 10
    n_runs: int = 5

    # 生成模型（VAE 擴增 / 缺值補值）
    latent_dim: int = 16
    rec_weight: float = 10.0
    mask_rate: float = 0.2
    hint_rate: float = 0.9
    gen_epochs: int = 50
    n_generated: int = 200

    def __post_init__(self):
        self.validate()

    # ========== 載入 / 覆寫 ==========

    @classmethod
    def field_names(cls) -> set:
        return {f.name for f in fields(cls)}

    @classmethod
    def _coerce(cls, name: str, value: Any) -> Any:
        kind = {f.name: f.type for f in fields(cls)}[name]
        try:
            if kind is int:
                if isinstance(value, bool):
                    raise ValueError("布林值")
                number = float(value) if isinstance(value, str) else value
                if int(number) != number:
                    raise ValueError("不是整數")
                return int(number)
            if kind is float:
                if isinstance(value, bool):
                    raise ValueError("布林值")
                return float(value)
            if not isinstance(value, str):
                raise ValueError("必須為字串")
            return value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"設定 {name}={value!r} 型別錯誤: {exc}") from exc

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'TrainConfig':
        unknown = sorted(set(data) - cls.field_names())
        if unknown:
            raise ConfigError(f"未知的設定鍵: {unknown}")
        return cls(**{k: cls._coerce(k, v) for k, v in data.items()})

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'TrainConfig':
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError as exc:
            raise ConfigError(f"找不到設定檔: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"設定檔不是合法 JSON: {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"設定檔必須是扁平的 JSON 物件: {path}")
        nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
        if nested:
            raise ConfigError(f"設定檔必須是扁平的 key/value，巢狀鍵: {nested}")
        return cls.from_dict(data)

    def with_overrides(self, overrides: Iterable[str]) -> 'TrainConfig':
        """套用 'key=value' 字串"""
        changes: Dict[str, Any] = {}
        for item in overrides or ():
            if '=' not in item:
                raise ConfigError(f"覆寫格式應為 key=value，收到 {item!r}")
            key, value = item.split('=', 1)
            key = key.strip()
            if key not in self.field_names():
                raise ConfigError(f"未知的設定鍵: {key}")
            changes[key] = self._coerce(key, value.strip())
        return replace(self, **changes)

    def evolve(self, **changes) -> 'TrainConfig':
        return replace(self, **changes)

    # ========== 驗證 ==========

    def validate(self) -> None:
        """數值為正、列舉值合法；不合法時拋出 ConfigError"""
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant 必須為 {VARIANTS}，收到 {self.variant}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation 必須為 {ABLATIONS}，收到 {self.ablation}")
        if self.temporal_mode not in TEMPORAL_MODES:
            raise ConfigError(f"temporal_mode 必須為 {TEMPORAL_MODES}，收到 {self.temporal_mode}")
        if self.nll_reduction not in NLL_REDUCTIONS:
            raise ConfigError(f"nll_reduction 必須為 {NLL_REDUCTIONS}，收到 {self.nll_reduction}")

        positive = ('embedding_dim', 'hidden_dim', 'gamma', 'lr', 'batch_size', 'max_epochs',
                    'window', 'stride', 'seq_len', 'n_runs', 'latent_dim', 'gen_epochs', 'n_generated')
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} 必須為正，收到 {getattr(self, name)}")
        for name in ('scheduler_patience', 'early_stop_patience', 'grad_clip', 'rec_weight'):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} 不可為負，收到 {getattr(self, name)}")
        if self.k_folds < 2:
            raise ConfigError(f"k_folds 必須 ≥ 2，收到 {self.k_folds}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout 必須在 [0, 1)，收到 {self.dropout}")
        for name in ('val_fraction', 'test_fraction', 'mask_rate', 'hint_rate'):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} 必須在 [0, 1)，收到 {getattr(self, name)}")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ConfigError("val_fraction + test_fraction 必須小於 1")

    # ========== 轉換 ==========

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def model_spec(self, n_nodes: int = len(PARAMETERS)) -> ModelSpec:
        return ModelSpec(
            n_nodes=n_nodes,
            window=self.window,
            embedding_dim=self.embedding_dim,
            hidden_dim=self.hidden_dim,
            variant=self.variant,
            ablation=self.ablation,
            gamma=self.gamma,
            dropout=self.dropout,
            temporal_mode=self.temporal_mode,
        )
