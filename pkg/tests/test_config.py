"""Tests for the configuration language: defaults, typing, error reporting
with line numbers, canonical emission round-trips, and sweep derivation."""

import pytest

from skewfl import (
    ConfigError,
    InvalidParameterError,
    SweepSpec,
    cell_config,
    emit_config,
    parse_config,
    sweep_spec,
)
from skewfl.config import IID_BETA, SWEEP_GRIDS


class TestDefaults:
    def test_empty_document_is_fully_defaulted(self):
        cfg = parse_config("")
        assert cfg.dataset.num_classes == 10
        assert cfg.dataset.dim == 32
        assert cfg.dataset.per_class == 100
        assert cfg.dataset.separation == 6.0
        assert cfg.dataset.seed is None
        assert cfg.partition_beta == 0.5
        assert cfg.partition_iid is False
        assert cfg.partition_seed is None
        assert cfg.federation.n == 20
        assert cfg.federation.f == 4
        assert cfg.federation.sampled_per_round == 20
        assert cfg.federation.rounds == 50
        assert cfg.federation.byzantine_ids == (16, 17, 18, 19)
        assert cfg.train.model.kind == "softmax_linear"
        assert cfg.train.learning_rate == 0.1
        assert cfg.train.local_epochs == 1
        assert cfg.train.batch_size == 128
        assert cfg.train.momentum == 0.0
        assert cfg.train.weight_decay == 1e-4
        assert cfg.train.clip_norm == 2.0
        assert cfg.defense.name == "mean"
        assert cfg.defense.wrappers == ()
        assert cfg.attack == "none"
        assert cfg.attack_params is None
        assert cfg.seeds == (0,)
        assert cfg.output_dir == "out"
        assert cfg.sweep_axis is None

    def test_f_defaults_to_fifth_of_n(self):
        cfg = parse_config("federation.n = 50\n")
        assert cfg.federation.f == 10
        assert cfg.federation.sampled_per_round == 50

    def test_attack_defaults(self):
        cfg = parse_config('attack = "lie"\n')
        assert cfg.attack_params.z == 1.5
        cfg = parse_config('attack = "strike"\n')
        assert cfg.attack_params.nu == 1.0
        assert cfg.attack_params.bisect_tolerance == 1e-2
        assert cfg.attack_params.bisect_max_iters == 64
        cfg = parse_config('attack = "ipm"\n')
        assert cfg.attack_params.epsilon == 0.1
        cfg = parse_config('attack = "minmax"\n')
        assert cfg.attack_params.gamma_init == 10.0
        assert cfg.attack_params.tau == 1e-5

    def test_defense_params_resolved(self):
        cfg = parse_config('defense = "rfa"\ndefense.iterations = 12\n')
        assert cfg.defense.params.iterations == 12
        assert cfg.defense.params.smoothing == 1e-6
        cfg = parse_config('defense = "cclip"\ndefense.clip_radius = 5.0\n')
        assert cfg.defense.params.clip_radius == 5.0
        assert cfg.defense.params.warm_start is True
        cfg = parse_config('defense = "dnc"\ndefense.subsample_dim = 64\n')
        assert cfg.defense.params.subsample_dim == 64

    def test_wrappers_and_bucketing_params(self):
        cfg = parse_config(
            'defense = "median"\n'
            'wrappers = ["bucketing", "nnm"]\n'
            "defense.bucket_size = 3\n"
            "defense.bucket_seed = 5\n")
        assert [w.kind for w in cfg.defense.wrappers] == ["bucketing", "nnm"]
        assert cfg.defense.wrappers[0].bucketing.bucket_size == 3
        assert cfg.defense.wrappers[0].bucketing.seed == 5

    def test_mlp_hidden(self):
        cfg = parse_config('train.model = "mlp_one_hidden"\n')
        assert cfg.train.model.hidden == 32
        cfg = parse_config('train.model = "mlp_one_hidden"\ntrain.hidden = 8\n')
        assert cfg.train.model.hidden == 8

    def test_int_promotes_to_float(self):
        cfg = parse_config("train.learning_rate = 1\n")
        assert cfg.train.learning_rate == 1.0

    def test_comments_and_quoted_hash(self):
        cfg = parse_config(
            "# full-line comment\n"
            "federation.n = 6  # trailing comment\n"
            'output_dir = "runs#1"\n')
        assert cfg.federation.n == 6
        assert cfg.output_dir == "runs#1"


class TestErrors:
    def err(self, text):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        return str(info.value)

    def test_syntax_error_with_line(self):
        msg = self.err("federation.n = 6\nnot a line\n")
        assert "line 2" in msg

    def test_bad_value(self):
        msg = self.err("federation.n = banana\n")
        assert "line 1" in msg and "banana" in msg

    def test_unquoted_string(self):
        msg = self.err("defense = mean\n")
        assert "line 1" in msg

    def test_duplicate_key(self):
        msg = self.err("federation.n = 6\n\nfederation.n = 8\n")
        assert "line 3" in msg and "first on line 1" in msg

    def test_bad_key_shape(self):
        assert "line 1" in self.err("a.b.c = 1\n")
        assert "line 1" in self.err("Federation.n = 1\n")

    def test_unknown_key(self):
        msg = self.err("federation.banana = 3\n")
        assert "line 1" in msg and "federation.banana" in msg

    def test_unterminated_list(self):
        assert "line 1" in self.err("seeds = [1, 2\n")

    def test_type_errors(self):
        assert "integer" in self.err("federation.n = 6.5\n")
        assert "line 1" in self.err("federation.n = true\n")
        assert "true or false" in self.err("partition.iid = 1\n")
        assert "list" in self.err("seeds = 3\n")
        assert "integers" in self.err('seeds = ["a"]\n')

    def test_empty_seeds(self):
        assert "seeds" in self.err("seeds = []\n")

    def test_unknown_attack_and_defense(self):
        msg = self.err('attack = "gauss"\n')
        assert "gauss" in msg and "line 1" in msg
        msg = self.err('defense = "average"\n')
        assert "average" in msg

    def test_inapplicable_attack_key(self):
        msg = self.err("attack.nu = 1.0\n")
        assert "line 1" in msg and "does not apply" in msg and "none" in msg

    def test_inapplicable_defense_key(self):
        msg = self.err('defense = "median"\ndefense.iterations = 9\n')
        assert "line 2" in msg and "does not apply" in msg

    def test_attack_key_for_other_attack(self):
        msg = self.err('attack = "lie"\nattack.nu = 0.5\n')
        assert "line 2" in msg and "does not apply" in msg and "lie" in msg

    def test_hidden_requires_mlp(self):
        msg = self.err("train.hidden = 8\n")
        assert "line 1" in msg

    def test_invalid_partition_beta(self):
        assert "partition.beta" in self.err("partition.beta = 0\n")

    def test_semantic_errors_wrapped(self):
        with pytest.raises(ConfigError):
            parse_config("federation.n = 4\nfederation.f = 3\n")
        with pytest.raises(ConfigError):
            parse_config("federation.byzantine_ids = [1, 2]\n")

    def test_sweep_values_without_axis(self):
        msg = self.err("sweep.values = [0.1]\n")
        assert "sweep.axis" in msg

    def test_unknown_sweep_axis(self):
        msg = self.err('sweep.axis = "gamma"\n')
        assert "gamma" in msg

    def test_bad_sweep_values(self):
        assert "clients" in self.err(
            'sweep.axis = "clients"\nsweep.values = [2.5]\n')
        assert "beta" in self.err(
            'sweep.axis = "beta"\nsweep.values = [-1.0]\n')
        assert "nu" in self.err(
            'attack = "strike"\nsweep.axis = "nu"\nsweep.values = ["IID"]\n')


class TestRoundTrip:
    CASES = (
        "",
        'defense = "rfa"\ndefense.iterations = 4\nseeds = [3, 1]\n',
        'defense = "median"\nwrappers = ["bucketing", "nnm"]\n'
        "defense.bucket_size = 3\n",
        'defense = "dnc"\ndefense.filter_fraction = 0.5\n'
        'attack = "strike"\nattack.nu = 0.75\n'
        'sweep.axis = "nu"\nsweep.values = [0.25, 0.5]\n',
        'defense = "cclip"\ndefense.warm_start = false\nattack = "lie"\n'
        'attack.z = 2.0\ntrain.model = "mlp_one_hidden"\ntrain.hidden = 16\n'
        "federation.byzantine_ids = [0, 5]\nfederation.f = 2\n",
        'attack = "minmax"\nsweep.axis = "beta"\n',
        'partition.iid = true\npartition.seed = 9\ndataset.seed = 4\n'
        'output_dir = "results"\n',
    )

    def test_parse_emit_parse_fixpoint(self):
        for text in self.CASES:
            cfg = parse_config(text)
            emitted = emit_config(cfg)
            again = parse_config(emitted)
            assert again == cfg, f"round trip changed config for {text!r}"
            assert emit_config(again) == emitted

    def test_emitted_is_canonical_flat_form(self):
        text = emit_config(parse_config(""))
        for line in text.strip().splitlines():
            assert " = " in line
        assert text.endswith("\n")
        assert "federation.n = 20" in text
        assert 'defense = "mean"' in text
        assert 'attack = "none"' in text


class TestSweeps:
    def test_default_grids(self):
        cfg = parse_config('sweep.axis = "beta"\n')
        spec = sweep_spec(cfg)
        assert spec.axis == "beta"
        assert spec.values == SWEEP_GRIDS["beta"]
        assert "IID" in spec.values
        cfg = parse_config('sweep.axis = "byz_ratio"\n')
        assert sweep_spec(cfg).values == (0.1, 0.2, 0.3, 0.4)
        cfg = parse_config('sweep.axis = "clients"\n')
        assert sweep_spec(cfg).values == (10, 30, 50, 70, 90)
        cfg = parse_config('attack = "strike"\nsweep.axis = "nu"\n')
        assert sweep_spec(cfg).values == tuple(0.25 * i for i in range(1, 9))

    def test_values_override(self):
        cfg = parse_config('sweep.axis = "clients"\nsweep.values = [4, 8]\n')
        assert sweep_spec(cfg).values == (4, 8)

    def test_no_axis_rejected(self):
        with pytest.raises(InvalidParameterError):
            sweep_spec(parse_config(""))

    def test_spec_validation(self):
        base = parse_config("")
        with pytest.raises(InvalidParameterError):
            SweepSpec(base=base, axis="gamma", values=(1,))
        with pytest.raises(InvalidParameterError):
            SweepSpec(base=base, axis="beta", values=())


class TestCellConfig:
    def test_beta_cell(self):
        base = parse_config("")
        cell = cell_config(base, "beta", 0.1)
        assert cell.partition_beta == 0.1
        assert cell.partition_iid is False
        assert cell.sweep_axis is None

    def test_beta_iid_cell(self):
        base = parse_config("")
        cell = cell_config(base, "beta", "IID")
        assert cell.partition_beta == IID_BETA
        assert cell.partition_iid is True

    def test_byz_ratio_cell(self):
        base = parse_config("")
        cell = cell_config(base, "byz_ratio", 0.4)
        assert cell.federation.f == 8
        assert cell.federation.byzantine_ids == tuple(range(12, 20))

    def test_clients_cell_scales_f_and_m(self):
        base = parse_config("")  # n=20, f=4, m=20
        cell = cell_config(base, "clients", 10)
        assert cell.federation.n == 10
        assert cell.federation.f == 2
        assert cell.federation.sampled_per_round == 10
        cell = cell_config(base, "clients", 90)
        assert cell.federation.f == 18
        assert cell.federation.sampled_per_round == 90

    def test_clients_cell_keeps_partial_sampling(self):
        base = parse_config("federation.sampled_per_round = 5\n")
        cell = cell_config(base, "clients", 30)
        assert cell.federation.sampled_per_round == 5
        cell = cell_config(base, "clients", 3)
        assert cell.federation.sampled_per_round == 3

    def test_nu_cell(self):
        base = parse_config('attack = "strike"\n')
        cell = cell_config(base, "nu", 0.5)
        assert cell.attack_params.nu == 0.5
        assert cell.attack_params.bisect_max_iters == 64

    def test_nu_requires_strike(self):
        base = parse_config('attack = "lie"\n')
        with pytest.raises(InvalidParameterError):
            cell_config(base, "nu", 0.5)

    def test_unknown_axis(self):
        with pytest.raises(InvalidParameterError):
            cell_config(parse_config(""), "gamma", 1)
