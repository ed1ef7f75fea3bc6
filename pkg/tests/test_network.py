import numpy as np
import pytest

from snnmap.autodiff import DimensionError
from snnmap.encoding import poisson_encode, repeat_encode
from snnmap.neuron import LIFParams
from snnmap.network import (
    SpikeRecord,
    build_cnnsnn,
    build_mlpsnn,
    count_spikes,
    forward,
    load_checkpoint,
    run_network,
    save_checkpoint,
)

from oracles import scalar_lif_trace

LIF = LIFParams(tau=2.0, v_th=1.0)


class TestBuildMlp:
    def test_layer_widths(self):
        net = build_mlpsnn(784, [256, 128], 10, LIF)
        assert [s.weight_shape() for s in net.specs] == [(784, 256), (256, 128), (128, 10)]
        assert net.classes == 10

    def test_parameter_count_desk_variant(self):
        net = build_mlpsnn(64, [32, 16], 10, LIF)
        total = sum(w.values.size for w in net.weights)
        assert total == 64 * 32 + 32 * 16 + 16 * 10

    def test_zero_input_yields_zero_spikes(self):
        net = build_mlpsnn(20, [12, 8], 4, LIF, t_steps=10)
        result = forward(net, repeat_encode(np.zeros(20), 10), record=True)
        assert result.spike_count == 0
        assert not result.rates.any()
        for layer in result.record.layers:
            assert not layer.any()


class TestBuildCnn:
    def test_geometry_chain(self):
        net = build_cnnsnn((1, 28, 28), [16, 32, 32], 64, 10, LIF)
        hw = [s.out_hw for s in net.specs[:3]]
        assert hw == [(14, 14), (7, 7), (4, 4)]
        assert net.specs[3].in_features == 32 * 4 * 4
        assert net.classes == 10

    def test_zero_input_silent(self):
        net = build_cnnsnn((1, 8, 8), [4, 4, 4], 16, 3, LIF, t_steps=5)
        result = forward(net, repeat_encode(np.zeros((1, 8, 8)), 5))
        assert result.spike_count == 0

    def test_geometry_that_does_not_compose(self):
        with pytest.raises(DimensionError, match="compose"):
            build_cnnsnn((1, 4, 4), [4, 4, 4], 8, 3, LIF, kernel_size=3, stride=2, padding=0)

    def test_forward_deterministic(self):
        net = build_cnnsnn((1, 8, 8), [4, 4, 4], 16, 3, LIF, t_steps=5, seed=3)
        seq = poisson_encode(np.random.default_rng(0).random((1, 8, 8)), 5, seed=11)
        a = forward(net, seq)
        b = forward(net, seq)
        assert np.array_equal(a.rates, b.rates)
        assert a.spike_count == b.spike_count


class TestForward:
    def test_rate_readout_matches_scalar_oracle(self):
        # single input, single neuron, identity weight: the layer is one LIF cell
        net = build_mlpsnn(1, [], 1, LIF, t_steps=12)
        net.weights[0].values = np.array([[1.0]])
        drive = 1.3
        seq = repeat_encode(np.array([drive]), 12)
        result = forward(net, seq, record=True)
        ref_spikes, _ = scalar_lif_trace([drive] * 12, LIF.tau, LIF.v_th, LIF.v_reset)
        assert result.rates[0] == pytest.approx(np.mean(ref_spikes))
        assert np.array_equal(result.record.layers[0][:, 0], ref_spikes)

    def test_rates_are_multiples_of_one_over_t(self):
        net = build_mlpsnn(6, [5, 4], 3, LIF, t_steps=10, seed=1)
        seq = poisson_encode(np.random.default_rng(1).random(6), 10, seed=2)
        rates = forward(net, seq).rates
        assert np.all(rates >= 0) and np.all(rates <= 1)
        steps = rates * 10
        assert np.allclose(steps, np.round(steps), atol=1e-12)

    def test_state_isolation_across_samples(self):
        net = build_mlpsnn(8, [6, 5], 3, LIF, t_steps=8, seed=2)
        rng = np.random.default_rng(5)
        seq_a = poisson_encode(rng.random(8), 8, seed=1)
        seq_b = poisson_encode(rng.random(8), 8, seed=2)
        b_alone = forward(net, seq_b)
        forward(net, seq_a)
        b_after_a = forward(net, seq_b)
        assert np.array_equal(b_alone.rates, b_after_a.rates)
        assert b_alone.spike_count == b_after_a.spike_count

    def test_geometry_mismatch(self):
        net = build_mlpsnn(8, [6, 5], 3, LIF)
        with pytest.raises(DimensionError, match="geometry"):
            forward(net, repeat_encode(np.zeros(9), 10))

    def test_high_threshold_silences_network(self):
        silent = build_mlpsnn(16, [12, 8], 4, LIFParams(tau=2.0, v_th=50.0), t_steps=10, seed=4)
        seq = poisson_encode(np.random.default_rng(3).random(16), 10, seed=7)
        assert forward(silent, seq).spike_count == 0

    def test_spike_count_non_increasing_in_vth(self):
        rng = np.random.default_rng(9)
        image = rng.random(16)
        seq = poisson_encode(image, 10, seed=5)
        counts = []
        for vth in (0.05, 0.3, 0.8, 1.5, 3.0, 10.0):
            net = build_mlpsnn(16, [12, 8], 4, LIFParams(tau=2.0, v_th=vth), t_steps=10, seed=4)
            counts.append(forward(net, seq).spike_count)
        assert counts == sorted(counts, reverse=True)

    def test_batched_run_matches_per_sample(self):
        net = build_mlpsnn(6, [5], 3, LIF, t_steps=6, seed=8)
        rng = np.random.default_rng(2)
        frames = (rng.random((6, 4, 6)) < 0.5).astype(np.float64)
        rates, _, total = run_network(net, frames)
        singles = [forward(net, frames[:, i]) for i in range(4)]
        assert np.array_equal(rates.values, np.stack([s.rates for s in singles]))
        assert int(round(total)) == sum(s.spike_count for s in singles)


class TestSpikeRecord:
    def test_count_empty(self):
        assert count_spikes(SpikeRecord(layers=[])) == 0

    def test_count_all_ones(self):
        rec = SpikeRecord(layers=[np.ones((3, 4)), np.ones((3, 4))])
        assert count_spikes(rec) == 24

    def test_count_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        layers = [(rng.random((5, 7)) < 0.4).astype(float) for _ in range(3)]
        rec = SpikeRecord(layers=layers)
        manual = sum(float(arr[t, j]) for arr in layers
                     for t in range(arr.shape[0]) for j in range(arr.shape[1]))
        assert count_spikes(rec) == int(manual)

    def test_record_shapes_and_binary(self):
        net = build_cnnsnn((1, 8, 8), [3, 3, 3], 12, 4, LIF, t_steps=6, seed=0)
        seq = poisson_encode(np.random.default_rng(4).random((1, 8, 8)), 6, seed=3)
        rec = forward(net, seq, record=True).record
        assert len(rec.layers) == 5
        for spec, layer in zip(net.specs, rec.layers):
            assert layer.shape == (6, spec.neuron_count)
            assert set(np.unique(layer)) <= {0.0, 1.0}


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        net = build_cnnsnn((1, 8, 8), [3, 3, 3], 12, 4,
                           LIFParams(tau=1.7, v_th=0.9, surrogate="sigmoid"), t_steps=6, seed=0)
        path = tmp_path / "checkpoint"
        save_checkpoint(net, path)
        back = load_checkpoint(path)
        assert back.t_steps == net.t_steps
        assert back.input_shape == net.input_shape
        for wa, wb in zip(net.weights, back.weights):
            assert wa.values.tobytes() == wb.values.tobytes()
        for sa, sb in zip(net.specs, back.specs):
            assert sa == sb
        # saving the reloaded network reproduces the same bytes
        path2 = tmp_path / "checkpoint2"
        save_checkpoint(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_forward_identical_after_reload(self, tmp_path):
        net = build_mlpsnn(10, [8, 6], 3, LIF, t_steps=5, seed=2)
        path = tmp_path / "ck"
        save_checkpoint(net, path)
        back = load_checkpoint(path)
        seq = poisson_encode(np.random.default_rng(1).random(10), 5, seed=9)
        assert np.array_equal(forward(net, seq).rates, forward(back, seq).rates)
