"""
3D student network: per-point MLP backbone with a class head and an
auxiliary feature head
"""

from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from ..ignet_core.errors import ShapeError
from ..ignet_core.numerics import ArrayLike, ParamVector, Var, mlp_forward, tanh, value_of
from ..ignet_data.frame import NUM_POINT_FEATURES


@dataclass
class Prediction:
    """Per-point class logits (N x C) and auxiliary features (N x d)"""

    logits: ArrayLike
    aux_features: ArrayLike

    def __post_init__(self):
        n_logits = np.shape(value_of(self.logits))[0]
        n_aux = np.shape(value_of(self.aux_features))[0]
        if n_logits != n_aux:
            raise ShapeError(f"logits ({n_logits}) and aux features ({n_aux}) disagree on N")

    @property
    def num_points(self) -> int:
        return int(np.shape(value_of(self.logits))[0])

    def detached(self) -> "Prediction":
        """Plain-array copy with no link to any tape"""
        return Prediction(
            logits=np.array(value_of(self.logits)),
            aux_features=np.array(value_of(self.aux_features)),
        )


@dataclass(frozen=True)
class StudentNet:
    """Layer layout of the student.

    backbone: F -> hidden -> hidden (tanh on the output), then
    ``head``: hidden -> C and ``aux``: hidden -> d, both linear.
    """

    num_classes: int
    feature_dim: int
    hidden: int = 32
    in_features: int = NUM_POINT_FEATURES

    @property
    def backbone_spec(self) -> Tuple[int, ...]:
        return (self.in_features, self.hidden, self.hidden)

    @property
    def head_spec(self) -> Tuple[int, ...]:
        return (self.hidden, self.num_classes)

    @property
    def aux_spec(self) -> Tuple[int, ...]:
        return (self.hidden, self.feature_dim)

    def init(self, rng: np.random.Generator) -> ParamVector:
        return (
            ParamVector.init_mlp(rng, self.backbone_spec, prefix="backbone.")
            .merged(ParamVector.init_mlp(rng, self.head_spec, prefix="head."))
            .merged(ParamVector.init_mlp(rng, self.aux_spec, prefix="aux."))
        )

    def embed(self, params: Mapping, features: ArrayLike) -> Var:
        return tanh(mlp_forward(params, features, self.backbone_spec, prefix="backbone."))

    def forward(self, params: Mapping, features: ArrayLike) -> Prediction:
        h = self.embed(params, features)
        return Prediction(
            logits=mlp_forward(params, h, self.head_spec, prefix="head."),
            aux_features=mlp_forward(params, h, self.aux_spec, prefix="aux."),
        )

    def predict_classes(self, params: Mapping, features: ArrayLike) -> np.ndarray:
        logits = value_of(self.forward(params, features).logits)
        return np.argmax(logits, axis=-1).astype(np.int64)
