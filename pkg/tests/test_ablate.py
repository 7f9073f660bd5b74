"""Ablation axes: variant enumeration, table layouts, end-to-end small run."""

import numpy as np
import pytest

from divseg.ablate import (
    ALPHA_VALUES,
    AblationReport,
    ablate,
    emit_ablation_table,
    load_ablation,
    save_ablation,
    variant_configs,
)
from divseg.errors import ConfigError
from divseg.evaluate import DiceReport
from divseg.network import ALL_SUBSETS


class TestVariantEnumeration:
    def test_loss_components_rows(self, tiny_config):
        variants = variant_configs(tiny_config, "loss_components")
        assert [v[0] for v in variants] == ["dice", "dice+MI", "dice+HD", "dice+MI+HD"]
        toggles = [(cfg.lam_mi > 0, cfg.lam_hd > 0) for _, cfg in variants]
        assert toggles == [(False, False), (True, False), (False, True), (True, True)]

    def test_alpha_sweep_rows(self, tiny_config):
        variants = variant_configs(tiny_config, "alpha_sweep")
        assert [v[0] for v in variants] == ["1.05", "1.08", "1.10", "1.15", "1.20"]
        assert tuple(cfg.alpha for _, cfg in variants) == ALPHA_VALUES
        assert all(cfg.divergence == "holder" for _, cfg in variants)

    def test_divergence_family_rows(self, tiny_config):
        variants = variant_configs(tiny_config, "divergence_family")
        assert len(variants) == 6
        assert variants[-1][0] == "Holder"
        assert variants[-1][1].divergence == "holder"
        kinds = [cfg.divergence for _, cfg in variants]
        assert kinds == [
            "total_variation",
            "squared_hellinger",
            "kullback_leibler",
            "neyman_chi2",
            "jensen_shannon",
            "holder",
        ]

    def test_variants_share_seed_and_data(self, tiny_config):
        for axis in ("divergence_family", "alpha_sweep", "loss_components"):
            for _, cfg in variant_configs(tiny_config, axis):
                assert cfg.seed == tiny_config.seed
                assert cfg.data_dir == tiny_config.data_dir

    def test_unknown_axis(self, tiny_config):
        with pytest.raises(ConfigError):
            variant_configs(tiny_config, "optimizer")


def _fake_reports(n):
    rng = np.random.default_rng(0)
    return [DiceReport(rng.uniform(0.1, 0.9, size=(15, 3))) for _ in range(n)]


class TestAblationReport:
    def test_region_table_layout(self):
        rep = AblationReport("alpha_sweep", ["1.05", "1.08"], _fake_reports(2))
        first, cols, labels, matrix = rep.table()
        assert first == "alpha"
        assert cols == ("WT", "TC", "ET", "Avg")
        assert labels == ("1.05", "1.08")
        for i, dice_rep in enumerate(rep.reports):
            assert np.allclose(matrix[i, :3], dice_rep.region_averages(), atol=0)
            assert matrix[i, 3] == pytest.approx(dice_rep.grand_average(), abs=0)

    def test_missing_count_table(self):
        rep = AblationReport("loss_components", ["dice"], _fake_reports(1))
        first, cols, labels, matrix = rep.table()
        assert first == "components"
        assert cols == ("3", "2", "1", "0", "Avg")
        grand = rep.reports[0].rows.mean(axis=1)
        for j, missing in enumerate((3, 2, 1, 0)):
            members = [i for i, s in enumerate(ALL_SUBSETS) if 4 - len(s) == missing]
            assert matrix[0, j] == pytest.approx(grand[members].mean(), abs=1e-15)
        assert matrix[0, 4] == pytest.approx(rep.reports[0].grand_average(), abs=0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            AblationReport("bad_axis", ["a"], _fake_reports(1))
        with pytest.raises(ConfigError):
            AblationReport("alpha_sweep", ["a", "b"], _fake_reports(1))


@pytest.fixture(scope="module")
def small_ablation(tiny_config, tiny_manifests):
    cfg = tiny_config.replace(epochs=1)
    return ablate(cfg, "loss_components", tiny_manifests["train"], tiny_manifests["test"])


class TestEndToEnd:
    def test_four_variants_in_order(self, small_ablation):
        assert small_ablation.variants == ("dice", "dice+MI", "dice+HD", "dice+MI+HD")
        assert len(small_ablation.reports) == 4

    def test_all_cells_finite(self, small_ablation):
        _, _, _, matrix = small_ablation.table()
        assert matrix.shape == (4, 5)
        assert np.all(np.isfinite(matrix))
        assert np.all((matrix >= 0) & (matrix <= 1))

    def test_emitted_csv_layout(self, small_ablation):
        lines = emit_ablation_table(small_ablation, "csv").strip().split("\n")
        assert lines[0] == "components,3,2,1,0,Avg"
        assert len(lines) == 5

    def test_json_round_trip_reemits_identically(self, small_ablation, tmp_path):
        path = tmp_path / "ablation.json"
        save_ablation(small_ablation, path)
        loaded = load_ablation(path)
        assert loaded.axis == small_ablation.axis
        assert loaded.variants == small_ablation.variants
        assert emit_ablation_table(loaded, "markdown") == emit_ablation_table(
            small_ablation, "markdown"
        )
        save_ablation(loaded, tmp_path / "again.json")
        assert (tmp_path / "again.json").read_bytes() == path.read_bytes()
