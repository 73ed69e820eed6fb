"""
Pruebas del esquema y del validador de documentos de experimento
"""
import glob
import json
import os

import pytest

from config_schema import CONFIG_SCHEMA, get_all_fields, get_defaults, get_field_spec, get_required_fields, \
    get_section_fields, get_sections
from config_validator import ConfigValidator, build_training_config, experiment_from_document, load_document, \
    load_experiment
from errors import ConfigError
from secrecy import Paradigm

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
SHIPPED_CONFIGS = sorted(glob.glob(os.path.join(ROOT, 'configs', '*.json')))


@pytest.fixture
def minimal():
    return {'name': 'prueba', 'seeds': [1, 2]}


def fields_with_errors(report):
    return [e['field'] for e in report['errors']]


class TestSchema:

    def test_required_fields(self):
        assert get_required_fields() == ['name', 'seeds']

    def test_every_field_documented(self):
        for name in get_all_fields():
            spec = get_field_spec(name)
            assert {'required', 'type', 'example', 'description'} <= set(spec), name
            if not spec['required']:
                assert 'default' in spec, name

    def test_sections(self):
        assert get_sections() == ['diffusion', 'network', 'paradigm', 'randomization', 'state', 'training']
        assert 'p_eve' in get_section_fields('paradigm')

    def test_defaults_match_dataclasses(self):
        defaults = get_defaults()
        assert defaults['training']['epochs'] == 2000
        assert defaults['training']['learning_rate'] == 1e-4
        assert defaults['paradigm']['p_eve'] == 0.70
        assert defaults['diffusion']['steps'] == 6
        assert 'name' not in defaults

    def test_unknown_field(self):
        assert get_field_spec('training.momentum') is None
        assert 'training.epochs' in CONFIG_SCHEMA


class TestConfigValidator:

    def test_minimal_document_valid(self, minimal):
        report = ConfigValidator(minimal).validate()
        assert report['is_valid']
        assert report['error_count'] == 0

    def test_missing_required(self):
        report = ConfigValidator({'name': 'x'}).validate()
        assert not report['is_valid']
        assert 'seeds' in fields_with_errors(report)
        assert report['errors'][0]['severity'] == 'ERROR'

    def test_p_eve_out_of_range(self, minimal):
        minimal['paradigm'] = {'p_eve': 1.5}
        report = ConfigValidator(minimal).validate()
        assert fields_with_errors(report) == ['paradigm.p_eve']
        assert report['errors'][0]['type'] == 'OUT_OF_RANGE'

    @pytest.mark.parametrize('document,field', [
        ({'epocs': 10}, 'epocs'),
        ({'training': {'epocs': 10}}, 'training.epocs'),
    ])
    def test_unknown_keys(self, minimal, document, field):
        minimal.update(document)
        report = ConfigValidator(minimal).validate()
        assert field in fields_with_errors(report)
        assert report['errors'][0]['type'] == 'UNKNOWN_KEY'

    def test_wrong_type(self, minimal):
        minimal['training'] = {'epochs': 'mil'}
        report = ConfigValidator(minimal).validate()
        assert report['errors'][0]['type'] == 'INVALID_TYPE'

    def test_bool_is_not_int(self, minimal):
        minimal['training'] = {'epochs': True}
        assert 'training.epochs' in fields_with_errors(ConfigValidator(minimal).validate())

    def test_unknown_variant(self, minimal):
        minimal['variants'] = ['lstm']
        report = ConfigValidator(minimal).validate()
        assert report['errors'][0]['type'] == 'INVALID_CHOICE'

    def test_cross_field_rules(self, minimal):
        minimal['training'] = {'batch_size': 128, 'replay_capacity': 64}
        minimal['network'] = {'model_dim': 30, 'n_heads': 4}
        report = ConfigValidator(minimal).validate()
        assert set(fields_with_errors(report)) == {'training.batch_size', 'network.model_dim'}

    def test_duplicate_seeds(self):
        report = ConfigValidator({'name': 'x', 'seeds': [3, 3]}).validate()
        assert fields_with_errors(report) == ['seeds']

    def test_unsafe_name(self):
        report = ConfigValidator({'name': '../fuera', 'seeds': [1]}).validate()
        assert report['errors'][0]['type'] == 'INVALID_NAME'

    def test_bad_scenario(self, minimal):
        minimal['scenario'] = {'uav_position_m': [0.0, 0.0, 5000.0]}
        report = ConfigValidator(minimal).validate()
        assert report['errors'][0]['type'] == 'INVALID_SCENARIO'

    def test_missing_scenario_file(self, minimal, tmp_path):
        minimal['scenario_file'] = 'no_existe.json'
        report = ConfigValidator(minimal, str(tmp_path)).validate()
        assert fields_with_errors(report) == ['scenario_file']

    def test_warnings(self, minimal):
        minimal['training'] = {'epochs': 5, 'log_timing': True}
        report = ConfigValidator(minimal).validate()
        assert report['is_valid']
        kinds = {w['type'] for w in report['warnings']}
        assert {'NO_CHECKPOINT', 'TIMING_IN_METRICS'} <= kinds

    def test_report_lines(self):
        validator = ConfigValidator({'name': 'x'})
        validator.validate()
        assert validator.get_validation_report()[0].startswith('[ERROR] seeds')

    def test_non_object_document(self):
        report = ConfigValidator([1, 2]).validate()
        assert report['errors'][0]['type'] == 'INVALID_DOCUMENT'


class TestBuildConfig:

    def test_defaults(self, minimal):
        cfg = build_training_config(minimal)
        assert cfg.epochs == 2000
        assert cfg.master_seed == 1
        assert cfg.actor_variant == 'moe_transformer_diffusion'
        assert cfg.paradigm.paradigm == Paradigm.STOCHASTIC
        assert cfg.network.state_dim == 387

    def test_sections_override_defaults(self, minimal):
        minimal.update({'paradigms': ['chance'], 'paradigm': {'p_eve': 0.9}, 'training': {'epochs': 10},
                        'uncertainty': {'position_sigma_m': 4.0}})
        cfg = build_training_config(minimal)
        assert cfg.paradigm.paradigm == Paradigm.CHANCE
        assert cfg.paradigm.p_eve == 0.9
        assert cfg.paradigm.c_eve == 3.0
        assert cfg.epochs == 10
        assert cfg.uncertainty.position_sigma == 4.0

    def test_experiment_raises_first_error(self, minimal):
        minimal['paradigm'] = {'p_eve': 1.5}
        with pytest.raises(ConfigError) as exc:
            experiment_from_document(minimal)
        assert exc.value.field == 'paradigm.p_eve'
        assert 'p_eve' in str(exc.value)

    def test_training_for(self, minimal):
        spec = experiment_from_document(minimal)
        cfg = spec.training_for('gaussian', 'robust', 2)
        assert (cfg.actor_variant, cfg.paradigm.paradigm, cfg.master_seed) == ('gaussian', Paradigm.ROBUST, 2)
        assert spec.run_dir == os.path.join('runs', 'prueba')


class TestDocuments:

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / 'roto.json'
        path.write_text('{\n  "name": "x",\n  "seeds": [1,\n}\n', encoding='utf-8')
        with pytest.raises(ConfigError) as exc:
            load_document(path)
        assert 'línea 4' in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_document(tmp_path / 'nada.json')

    def test_shipped_configs_present(self):
        names = {os.path.basename(p) for p in SHIPPED_CONFIGS}
        assert {'smoke.json', 'robust_benchmark.json', 'uncertainty_sweep.json'} <= names

    @pytest.mark.parametrize('path', SHIPPED_CONFIGS, ids=os.path.basename)
    def test_shipped_configs_load(self, path):
        spec = load_experiment(path)
        with open(path, encoding='utf-8') as f:
            assert spec.document == json.load(f)
        assert spec.seeds

    def test_smoke_config(self):
        spec = load_experiment(os.path.join(ROOT, 'configs', 'smoke.json'))
        cfg = spec.training
        assert (cfg.epochs, cfg.master_seed, cfg.actor_variant) == (200, 7, 'mlp_diffusion')
        assert cfg.paradigm.paradigm == Paradigm.STOCHASTIC
