import json
import math

import numpy as np
import pytest

from sidecar_svc.backend import HashedLinearModel, tokenize
from sidecar_svc.errors import ModelConfigError


def test_tokenize_lowercases_and_splits():
    assert tokenize("Tanh(x) saturates FAST-2") == ["tanh", "x", "saturates",
                                                    "fast", "2"]
    assert tokenize("") == []


class TestHandshake:
    def test_reports_dim_and_name(self):
        info = HashedLinearModel(dim=32, seed=3).handshake()
        assert info == {"dim": 32, "model_name": "hashed-linear-d32-s3"}

    def test_explicit_name_wins(self):
        info = HashedLinearModel(model_name="cssc-ft").handshake()
        assert info["model_name"] == "cssc-ft"


class TestDeterminism:
    def test_same_config_same_outputs(self):
        a = HashedLinearModel(dim=48, seed=11)
        b = HashedLinearModel(dim=48, seed=11)
        assert a.section_logits("tanh saturates", "m.f") == \
            b.section_logits("tanh saturates", "m.f")
        assert a.embed("tanh saturates") == b.embed("tanh saturates")
        assert a.context_probability("x y", "y z") == \
            b.context_probability("x y", "y z")

    def test_seed_changes_the_heads(self):
        a = HashedLinearModel(seed=1)
        b = HashedLinearModel(seed=2)
        assert a.section_logits("tanh saturates") != \
            b.section_logits("tanh saturates")


class TestSectionHead:
    def test_four_finite_logits(self):
        logits = HashedLinearModel().section_logits("output range is bounded",
                                                    "torch.nn.Tanh")
        assert len(logits) == 4
        assert all(isinstance(v, float) and math.isfinite(v) for v in logits)

    def test_api_identity_conditions_the_logits(self):
        model = HashedLinearModel()
        assert model.section_logits("the input is a tensor", "torch.nn.Tanh") != \
            model.section_logits("the input is a tensor", "numpy.clip")


class TestContextHead:
    def test_identical_text_hits_the_gain_ceiling(self):
        model = HashedLinearModel()
        p = model.context_probability("it also saturates", "it also saturates")
        expected = 1.0 / (1.0 + math.exp(-(model.context_gain + model.context_bias)))
        assert p == pytest.approx(expected)

    def test_disjoint_pair_scores_lower_than_identity(self):
        model = HashedLinearModel()
        same = model.context_probability("gradient flow stalls",
                                         "gradient flow stalls")
        other = model.context_probability("gradient flow stalls",
                                          "choose a bigger batch")
        assert 0.0 <= other < same <= 1.0


class TestEmbedding:
    def test_unit_norm_and_dim(self):
        model = HashedLinearModel(dim=40)
        vec = model.embed("tanh squashes every activation")
        assert len(vec) == 40
        assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_empty_text_is_the_zero_vector(self):
        assert HashedLinearModel(dim=8).embed("") == [0.0] * 8

    def test_json_round_trip_is_bit_exact(self):
        vec = HashedLinearModel().embed("tanh squashes every activation")
        assert json.loads(json.dumps(vec)) == vec


class TestModelFile:
    def test_loads_known_fields(self, tmp_path):
        path = tmp_path / "models.json"
        path.write_text(json.dumps({"dim": 16, "seed": 5, "model_name": "tiny"}))
        model = HashedLinearModel.from_file(str(path))
        assert (model.dim, model.model_name) == (16, "tiny")

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "models.json"
        path.write_text(json.dumps({"dim": 16, "layers": 12}))
        with pytest.raises(ModelConfigError, match="layers"):
            HashedLinearModel.from_file(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelConfigError, match="not found"):
            HashedLinearModel.from_file(str(tmp_path / "absent.json"))

    @pytest.mark.parametrize("dim", [0, -4, "64"])
    def test_bad_dim_rejected(self, dim):
        with pytest.raises(ModelConfigError):
            HashedLinearModel(dim=dim)
