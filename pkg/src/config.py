"""
config.py - Configuration centrale de la bibliothèque

Ce module centralise toutes les constantes numériques (normalisation, shift,
architecture, entraînement, contrôle des gradients) ainsi que les deux seuls
réglages lus dans l'environnement (.env) : la verbosité des logs et le mode
déterministe. Les sorties des commandes ne dépendent donc jamais de
l'environnement.
"""

import os
from fractions import Fraction
from dotenv import load_dotenv

# Charger les variables d'environnement
load_dotenv()


def _env_bool(key, default):
    """Return an environment flag as a boolean (accepts 1/true/yes/on)."""
    val = os.getenv(key)
    if val is None:
        return default
    return val.lower() in ('1', 'true', 'yes', 'on')


class Config:
    """Configuration de la bibliothèque Affine-Shift."""

    # Environnement (verbosité et mode d'exécution uniquement)
    LOG_LEVEL = os.getenv('AST_LOG_LEVEL', 'WARNING').upper()
    DETERMINISTIC = _env_bool('AST_DETERMINISTIC', True)

    # Noyau numérique
    LN_EPS = 1e-6
    INIT_STD = 0.02
    # Approximation tanh de la GELU : 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    GELU_COEF = 0.044715

    # Opérateur de shift
    SHIFT_OFFSET = 1
    SHIFT_FRACTION_IMAGE = Fraction(1, 3)
    SHIFT_FRACTION_VIDEO = Fraction(1, 2)

    # Bloc Affine-Shift
    SE_REDUCTION = 4
    DWCONV_KERNEL = 3
    MHSA_HEADS = 1

    # Stem et transitions entre étages
    STEM_KERNEL = 7
    STEM_STRIDE = 4
    STEM_PADDING = 3
    STEM_TIME_KERNEL = 3
    STEM_TIME_STRIDE = 2
    STEM_TIME_PADDING = 1
    # 2 -> patch merging 2x2 (pad 0) ; 3 -> conv 3x3 (pad 1)
    DOWNSAMPLE_KERNEL = 2
    INPUT_MULTIPLE = 32

    # Micro-modèle (entraînement jouet et contrôle des gradients)
    MICRO_CHANNELS = 24
    MICRO_DEPTH = 4
    MICRO_EXPANSION = 2

    # Tâches jouets
    TOY_FRAMES = 8
    TOY_SIZE = 32
    TOY_SAMPLES = 320
    TOY_NOISE = 0.1

    # Entraînement (AdamW + cosinus avec warmup linéaire)
    BASE_LR = 2e-4
    REFERENCE_BATCH = 128
    TOY_LR = 2e-3
    MIN_LR = 1e-5
    WEIGHT_DECAY = 0.05
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8
    WARMUP_STEPS = 20
    EPOCHS = 30
    BATCH_SIZE = 16

    # Contrôle des gradients par différences finies
    GRADCHECK_STEP = 1e-3
    GRADCHECK_TOL = 1e-3
    GRADCHECK_SEEDS = 5
    GRADCHECK_MAX_COORDS = 12

    # Journal d'exécution : SHA-256 de "AST_RUN_JOURNAL_GENESIS"
    JOURNAL_GENESIS_HASH = "75692414197f8f452b65409133964f3c4ba408bfab20a51b30d7f6ec658c3b34"

    @staticmethod
    def afficher_config():
        """Affiche la configuration actuelle (pour debug)."""
        print("=== Configuration de la bibliothèque ===")
        print(f"Niveau de log : {Config.LOG_LEVEL}")
        print(f"Mode déterministe : {Config.DETERMINISTIC}")
        print(f"LayerNorm eps : {Config.LN_EPS}")
        print(f"Shift image / vidéo : {Config.SHIFT_FRACTION_IMAGE} / {Config.SHIFT_FRACTION_VIDEO}"
              f" (décalage {Config.SHIFT_OFFSET})")
        print(f"Réduction SE : {Config.SE_REDUCTION} ; noyau DWConv : {Config.DWCONV_KERNEL}")
        print(f"Stem : {Config.STEM_KERNEL}/{Config.STEM_STRIDE}/{Config.STEM_PADDING} ;"
              f" downsample : {Config.DOWNSAMPLE_KERNEL}")
        print(f"AdamW : lr={Config.TOY_LR} wd={Config.WEIGHT_DECAY}"
              f" betas=({Config.ADAM_BETA1}, {Config.ADAM_BETA2})")
        print(f"Gradcheck : pas={Config.GRADCHECK_STEP} tol={Config.GRADCHECK_TOL}"
              f" graines={Config.GRADCHECK_SEEDS}")
        print("=" * 40)


# Pour tester ce module directement
if __name__ == '__main__':
    Config.afficher_config()
