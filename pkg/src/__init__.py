# Package principal de la bibliothèque Affine-Shift / VAST
import os

# Les pools BLAS/OpenMP doivent être fixés avant le premier import de numpy.
if os.getenv('AST_DETERMINISTIC', '1') not in ('0', 'false', 'False'):
    for _var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
        os.environ.setdefault(_var, '1')
