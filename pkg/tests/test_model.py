import numpy as np
import pytest

from avgzsl import model, nn
from avgzsl.errors import ConfigError, DataError, FormatError
from avgzsl.model import (AblationSwitches, Batch, ClassTable, ModelDims,
                          av_input_dim, text_input_dim)
from avgzsl.nn import Mode


def _toy_inputs(dims, rng, n=4, c=3):
    return (rng.normal(size=(n, dims.d_in_v)),
            rng.normal(size=(n, dims.d_in_a)),
            ClassTable(clip=rng.normal(size=(c, dims.d_in_v)),
                       clap=rng.normal(size=(c, dims.d_in_a))),
            np.array([0, 1, 2, 1][:n]))


def test_switch_validation():
    with pytest.raises(ConfigError):
        AblationSwitches(label_embedding="wat")
    with pytest.raises(ConfigError):
        AblationSwitches(loss_terms=frozenset())
    with pytest.raises(ConfigError):
        AblationSwitches(modality="audio")  # needs clap labels
    AblationSwitches(modality="audio", label_embedding="clap")
    AblationSwitches(modality="visual", label_embedding="clip")


def test_input_widths_per_ablation():
    dims = ModelDims()
    assert av_input_dim(dims, AblationSwitches()) == 1536
    assert av_input_dim(dims, AblationSwitches(
        modality="audio", label_embedding="clap")) == 1024
    assert av_input_dim(dims, AblationSwitches(
        modality="visual", label_embedding="clip")) == 512
    assert text_input_dim(dims, AblationSwitches()) == 1536
    assert text_input_dim(dims, AblationSwitches(
        label_embedding="clip")) == 512
    assert text_input_dim(dims, AblationSwitches(
        label_embedding="clap")) == 1024


def test_encode_audio_visual_shape_and_range():
    dims = ModelDims()
    params = model.init_params(dims, AblationSwitches(), seed=0)
    rng = np.random.default_rng(0)
    v = rng.normal(size=(2, 512)).astype(np.float32)
    a = rng.normal(size=(2, 1024)).astype(np.float32)
    o = model.encode_audio_visual(v, a, params, Mode.EVAL)
    assert o.shape == (2, 512)
    assert (o >= 0).all()


def test_zero_parameters_give_zero_output(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=0)
    params.o_enc.affine.weight[:] = 0
    params.o_enc.affine.bias[:] = 0
    rng = np.random.default_rng(1)
    v = rng.normal(size=(3, toy_dims.d_in_v)).astype(np.float32)
    a = rng.normal(size=(3, toy_dims.d_in_a)).astype(np.float32)
    o = model.encode_audio_visual(v, a, params, Mode.EVAL)
    assert np.array_equal(o, np.zeros_like(o))


def test_concat_order_is_visual_first():
    # equal modality widths, asymmetric weights: swapping the inputs must
    # change the output
    dims = ModelDims(d_in_a=3, d_in_v=3, d_model=4, d_hidden=4, d_out=2,
                     dropout_rate=0.0)
    params = model.init_params(dims, AblationSwitches(), seed=0)
    rng = np.random.default_rng(2)
    v = rng.normal(size=(2, 3)).astype(np.float32)
    a = rng.normal(size=(2, 3)).astype(np.float32)
    o_correct = model.encode_audio_visual(v, a, params, Mode.EVAL)
    o_swapped = model.encode_audio_visual(a, v, params, Mode.EVAL)
    assert not np.allclose(o_correct, o_swapped)


def test_encode_text_clip_only_width(toy_dims):
    sw = AblationSwitches(label_embedding="clip")
    params = model.init_params(toy_dims, sw, seed=0)
    assert params.w_enc.affine.in_dim == toy_dims.d_in_v
    rng = np.random.default_rng(3)
    w_v = rng.normal(size=(5, toy_dims.d_in_v)).astype(np.float32)
    w = model.encode_text(w_v, None, params, Mode.EVAL)
    assert w.shape == (5, toy_dims.d_model)


def test_encode_text_identical_rows_map_identically(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=0)
    rng = np.random.default_rng(4)
    row_v = rng.normal(size=toy_dims.d_in_v).astype(np.float32)
    row_a = rng.normal(size=toy_dims.d_in_a).astype(np.float32)
    w_v = np.stack([row_v, row_v])
    w_a = np.stack([row_a, row_a])
    w = model.encode_text(w_v, w_a, params, Mode.EVAL)
    assert np.array_equal(w[0], w[1])


def test_projection_shapes_and_eval_determinism(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=0)
    rng = np.random.default_rng(5)
    o = rng.normal(size=(2, toy_dims.d_model)).astype(np.float32)
    t1 = model.project_output(o, params, Mode.EVAL)
    t2 = model.project_output(o, params, Mode.EVAL)
    assert t1.shape == (2, toy_dims.d_out)
    assert np.array_equal(t1, t2)
    w = rng.normal(size=(5, toy_dims.d_model)).astype(np.float32)
    tw = model.project_text(w, params, Mode.EVAL)
    assert tw.shape == (5, toy_dims.d_out)


def test_decode_shapes(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=0)
    rng = np.random.default_rng(6)
    theta_o = rng.normal(size=(4, toy_dims.d_out)).astype(np.float32)
    theta_w = rng.normal(size=(3, toy_dims.d_out)).astype(np.float32)
    rho_o, rho_w = model.decode(theta_o, theta_w, params, Mode.EVAL)
    assert rho_o.shape == (4, toy_dims.d_model)
    assert rho_w.shape == (3, toy_dims.d_model)


def test_forward_batch_trace_shapes(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=0,
                               dtype=np.float64)
    rng = np.random.default_rng(7)
    v, a, table, labels = _toy_inputs(toy_dims, rng)
    trace = model.forward_batch(Batch(v, a, labels), table, params,
                                Mode.TRAIN, None)
    d = toy_dims
    assert trace.o.shape == (4, d.d_model)
    assert trace.theta_o.shape == (4, d.d_out)
    assert trace.w.shape == (3, d.d_model)
    assert trace.theta_w.shape == (3, d.d_out)
    assert trace.rho_o.shape == (4, d.d_model)
    assert trace.rho_w.shape == (3, d.d_model)


def test_forward_batch_eval_is_side_effect_free(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=0)
    before = {k: v.copy() for name in model.BLOCK_ORDER
              for k, v in ((f"{name}.rm", params.block(name).bn.running_mean),
                           (f"{name}.rv", params.block(name).bn.running_var))}
    rng = np.random.default_rng(8)
    v, a, table, labels = _toy_inputs(toy_dims, rng)
    model.forward_batch(Batch(v.astype(np.float32), a.astype(np.float32),
                              labels),
                        ClassTable(table.clip.astype(np.float32),
                                   table.clap.astype(np.float32)),
                        params, Mode.EVAL, None)
    for name in model.BLOCK_ORDER:
        assert np.array_equal(params.block(name).bn.running_mean,
                              before[f"{name}.rm"])
        assert np.array_equal(params.block(name).bn.running_var,
                              before[f"{name}.rv"])


def test_forward_batch_unknown_label(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=0)
    rng = np.random.default_rng(9)
    v, a, table, _ = _toy_inputs(toy_dims, rng)
    with pytest.raises(DataError, match="class table"):
        model.forward_batch(Batch(v, a, np.array([0, 1, 3, 1])), table,
                            params, Mode.EVAL, None)


def test_eval_forward_is_batch_composable(toy_dims):
    # eval-mode BN uses running stats, so sub-batch results concatenate
    params = model.init_params(toy_dims, AblationSwitches(), seed=0)
    rng = np.random.default_rng(10)
    v = rng.normal(size=(6, toy_dims.d_in_v)).astype(np.float32)
    a = rng.normal(size=(6, toy_dims.d_in_a)).astype(np.float32)
    o_full = model.encode_audio_visual(v, a, params, Mode.EVAL)
    o_parts = np.concatenate([
        model.encode_audio_visual(v[:2], a[:2], params, Mode.EVAL),
        model.encode_audio_visual(v[2:], a[2:], params, Mode.EVAL),
    ])
    assert np.array_equal(o_full, o_parts)


def test_init_params_deterministic(toy_dims):
    p1 = model.init_params(toy_dims, AblationSwitches(), seed=42)
    p2 = model.init_params(toy_dims, AblationSwitches(), seed=42)
    for k, v in p1.parameters().items():
        assert np.array_equal(v, p2.parameters()[k])


def test_init_params_full_size_parameter_count():
    params = model.init_params(ModelDims(), AblationSwitches(), seed=0)
    assert 2_000_000 <= params.param_count() <= 2_400_000


def test_audio_only_has_fewer_parameters():
    both = model.init_params(ModelDims(), AblationSwitches(), seed=0)
    audio = model.init_params(
        ModelDims(), AblationSwitches(modality="audio",
                                      label_embedding="clap"), seed=0)
    assert audio.param_count() < both.param_count()


def test_ablations_preserve_downstream_shapes(toy_dims):
    configs = [
        AblationSwitches(),
        AblationSwitches(label_embedding="clip"),
        AblationSwitches(label_embedding="clap"),
        AblationSwitches(modality="audio", label_embedding="clap"),
        AblationSwitches(modality="visual", label_embedding="clip"),
    ]
    rng = np.random.default_rng(11)
    v, a, table, labels = _toy_inputs(toy_dims, rng)
    for sw in configs:
        params = model.init_params(toy_dims, sw, seed=0, dtype=np.float64)
        trace = model.forward_batch(Batch(v, a, labels), table, params,
                                    Mode.TRAIN, None)
        assert trace.theta_o.shape == (4, toy_dims.d_out)
        assert trace.theta_w.shape == (3, toy_dims.d_out)


def test_all_network_outputs_nonnegative(toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=1,
                               dtype=np.float64)
    rng = np.random.default_rng(12)
    v, a, table, labels = _toy_inputs(toy_dims, rng)
    trace = model.forward_batch(Batch(v, a, labels), table, params,
                                Mode.TRAIN, None)
    for tensor in (trace.o, trace.theta_o, trace.w, trace.theta_w,
                   trace.rho_o, trace.rho_w):
        assert (tensor >= 0).all()


def test_checkpoint_round_trip_bit_exact(tmp_path, toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=5)
    # make running stats nontrivial
    params.o_enc.bn.running_mean += 0.25
    params.o_enc.bn.running_var *= 1.5
    path = tmp_path / "model.ckpt"
    model.save_checkpoint(params, path)
    loaded = model.load_checkpoint(path)
    assert loaded.dims == params.dims
    assert loaded.switches == params.switches
    assert loaded.seed == params.seed
    for name in model.BLOCK_ORDER:
        a, b = params.block(name), loaded.block(name)
        assert np.array_equal(a.affine.weight, b.affine.weight)
        assert np.array_equal(a.affine.bias, b.affine.bias)
        assert np.array_equal(a.bn.gamma, b.bn.gamma)
        assert np.array_equal(a.bn.beta, b.bn.beta)
        assert np.array_equal(a.bn.running_mean, b.bn.running_mean)
        assert np.array_equal(a.bn.running_var, b.bn.running_var)


def test_checkpoint_round_trip_preserves_eval_forward(tmp_path, toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=5)
    rng = np.random.default_rng(13)
    v = rng.normal(size=(3, toy_dims.d_in_v)).astype(np.float32)
    a = rng.normal(size=(3, toy_dims.d_in_a)).astype(np.float32)
    path = tmp_path / "model.ckpt"
    model.save_checkpoint(params, path)
    loaded = model.load_checkpoint(path)
    before = model.encode_audio_visual(v, a, params, Mode.EVAL)
    after = model.encode_audio_visual(v, a, loaded, Mode.EVAL)
    assert np.array_equal(before, after)


def test_checkpoint_rejects_corruption(tmp_path, toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=5)
    path = tmp_path / "model.ckpt"
    model.save_checkpoint(params, path)
    blob = path.read_bytes()
    (tmp_path / "bad_magic.ckpt").write_bytes(b"NOTMAGIC" + blob[8:])
    with pytest.raises(FormatError, match="magic"):
        model.load_checkpoint(tmp_path / "bad_magic.ckpt")
    (tmp_path / "truncated.ckpt").write_bytes(blob[:-100])
    with pytest.raises(FormatError, match="truncated"):
        model.load_checkpoint(tmp_path / "truncated.ckpt")


def test_checkpoint_rejects_mismatched_dims(tmp_path, toy_dims):
    params = model.init_params(toy_dims, AblationSwitches(), seed=5)
    path = tmp_path / "model.ckpt"
    model.save_checkpoint(params, path)
    with pytest.raises(FormatError, match="dims"):
        model.load_checkpoint(path, expect_dims=ModelDims())
