"""
test_config.py - Vérifie la configuration centrale

Teste que :
1. La configuration se charge et s'affiche
2. Les drapeaux d'environnement sont interprétés correctement
3. Les constantes dérivées restent cohérentes entre elles
"""

import hashlib
from fractions import Fraction

from src.config import Config, _env_bool


def test_configuration(capsys):
    """La configuration se charge et s'affiche."""
    Config.afficher_config()
    out = capsys.readouterr().out
    assert "Configuration de la bibliothèque" in out
    assert f"Réduction SE : {Config.SE_REDUCTION}" in out


def test_drapeaux_environnement(monkeypatch):
    monkeypatch.delenv('AST_TEST_FLAG', raising=False)
    assert _env_bool('AST_TEST_FLAG', True) is True
    for value in ('1', 'true', 'YES', 'on'):
        monkeypatch.setenv('AST_TEST_FLAG', value)
        assert _env_bool('AST_TEST_FLAG', False) is True
    monkeypatch.setenv('AST_TEST_FLAG', 'non')
    assert _env_bool('AST_TEST_FLAG', True) is False


def test_constantes_coherentes():
    assert Config.SHIFT_FRACTION_IMAGE == Fraction(1, 3)
    assert Config.SHIFT_FRACTION_VIDEO == Fraction(1, 2)
    assert Config.INPUT_MULTIPLE == Config.STEM_STRIDE * 2 ** 3
    assert Config.MICRO_CHANNELS % Config.SE_REDUCTION == 0
    assert Config.TOY_SIZE % Config.STEM_STRIDE == 0
    assert Config.LOG_LEVEL == Config.LOG_LEVEL.upper()


def test_hash_genese():
    assert Config.JOURNAL_GENESIS_HASH == hashlib.sha256(b"AST_RUN_JOURNAL_GENESIS").hexdigest()
