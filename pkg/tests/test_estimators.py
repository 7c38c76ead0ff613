import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from varlex.domain import Box, CubeLattice, GridFunction, random_indicator_sum
from varlex.estimators import CommutatorTransformer, LuxemburgNormTransformer, MaximalTransformer
from varlex.exceptions import DomainError
from varlex.exponents import Field
from varlex.maximal import MaximalSpec, maximal
from varlex.operators import FractionalKernel, apply_commutator
from varlex.spaces import luxemburg_norm

BOX = Box((0.5,), 0.5)


def _rows(rng, k=4, N=32):
    return np.stack([random_indicator_sum(BOX, N, rng).values for _ in range(k)])


def test_norm_transformer_matches_function(rng):
    X = _rows(rng)
    p = Field.affine(BOX, [1.0], 1.5, 1.5, 2.5)
    out = LuxemburgNormTransformer(phi=p, box=BOX).fit_transform(X)
    ref = [luxemburg_norm(p, GridFunction(BOX, x)).value for x in X]
    np.testing.assert_allclose(out[:, 0], ref, rtol=1e-9)


def test_commutator_transformer_matches_function(rng):
    X = _rows(rng)
    K = FractionalKernel(0.5)
    b = GridFunction.sample(BOX, 32, lambda x: x[..., 0])
    out = CommutatorTransformer(kernel=K, b=b, m=1).fit_transform(X)
    np.testing.assert_allclose(out[0], apply_commutator(K, b, 1, GridFunction(BOX, X[0])).values)


def test_maximal_then_norm_pipeline(rng):
    X = _rows(rng)
    spec = MaximalSpec(CubeLattice(BOX, 0, 5))
    pipe = make_pipeline(MaximalTransformer(spec), LuxemburgNormTransformer(phi=Field.constant(BOX, 2.0), box=BOX))
    out = pipe.fit_transform(X)
    ref = luxemburg_norm(Field.constant(BOX, 2.0), maximal(spec, GridFunction(BOX, X[1]))).value
    assert out[1, 0] == pytest.approx(ref)


def test_params_clone_and_errors(rng):
    t = LuxemburgNormTransformer(phi=Field.constant(BOX, 2.0), box=BOX, tol=1e-8)
    assert clone(t).get_params()["tol"] == 1e-8
    with pytest.raises(NotFittedError):
        t.transform(_rows(rng))
    with pytest.raises(DomainError):
        t.fit(np.ones((2, 6)))
    with pytest.raises(DomainError):
        CommutatorTransformer(kernel=FractionalKernel(0.5), m=1).fit(_rows(rng))
