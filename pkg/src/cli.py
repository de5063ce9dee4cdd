"""
cli.py - Point d'entrée en ligne de commande

    python -m src.cli describe --model ast-ti --resolution 224
    python -m src.cli gradcheck --scope ops
    python -m src.cli train-toy --task temporal-order --out runs/toy
    python -m src.cli infer --model-file runs/toy/model.tnsr --input-tensor x.tnsr
    python -m src.cli config

Codes de sortie : 0 succès, 1 échec d'un contrôle, 2 erreur d'usage ou de
lecture.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from src.analysis import REPORT_FORMATS, analyze, report
from src.config import Config
from src.errors import AstError, DimensionError
from src.gradcheck import SCOPES, run_suite
from src.harness import evaluate, gen_toy_dataset, micro_spec, predict, train
from src.journal import RunJournal, verifier_integrite
from src.model_config import ModelConfig, load_config, save_config
from src.models import build_model
from src.specs import ModelSpec, StemKind, TaskKind, ToyTask, TrainConfig
from src.tnsr import load_params, read_tensor, save_dataset, save_params

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _parse_views(text):
    try:
        a, b = (int(v) for v in text.lower().split('x'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"vues attendues sous la forme AxB, reçu {text!r}")
    if a < 1 or b < 1:
        raise argparse.ArgumentTypeError(f"nombre de vues invalide : {text!r}")
    return a * b


def cmd_describe(args):
    overrides = {'height': args.resolution, 'width': args.resolution, 'num_classes': args.num_classes}
    if args.frames is not None:
        overrides['frames'] = args.frames
    if args.stem is not None:
        overrides['stem'] = StemKind(args.stem)
    spec = ModelSpec.from_name(args.model, **overrides)
    stats = analyze(spec)
    print(report(stats, args.format, views=args.views, flops_x2=args.flops_x2))
    return EXIT_OK


def cmd_gradcheck(args):
    results = run_suite(args.scope, seed=args.seed, seeds=args.seeds)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} contrôles réussis")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_train_toy(args):
    kind = TaskKind(args.task)
    if args.config:
        config = load_config(args.config)
        spec = config.spec
        task = ToyTask(kind=kind, frames=spec.frames, height=spec.height, width=spec.width,
                       num_classes=spec.num_classes, samples=args.samples, seed=args.seed)
    else:
        task = ToyTask(kind=kind, samples=args.samples, seed=args.seed)
        config = ModelConfig(micro_spec(task), args.seed)
    dataset = gen_toy_dataset(task)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    cfg = replace(cfg, warmup_steps=min(cfg.warmup_steps, cfg.total_steps(len(dataset.y_train))))

    os.makedirs(args.out, exist_ok=True)
    journal_path = os.path.join(args.out, 'journal.jsonl')
    if os.path.exists(journal_path):
        os.remove(journal_path)
    journal = RunJournal(journal_path)
    model = build_model(config.spec, config.seed)
    log = train(model, dataset, cfg, log_path=os.path.join(args.out, 'train_log.csv'), journal=journal)

    save_params(os.path.join(args.out, 'model.tnsr'), model.params)
    save_config(os.path.join(args.out, 'model.json'), config)
    if args.save_dataset:
        save_dataset(os.path.join(args.out, 'dataset.tnsr'), dataset)
    val = evaluate(model, dataset, 'val')
    journal.log_event('CHECKPOINT', {'file': 'model.tnsr', 'val_acc': round(val.accuracy, 6)})
    valid, _ = verifier_integrite(journal_path)
    print(json.dumps({
        'train_acc': round(log.last('train').acc, 6),
        'val_acc': round(val.accuracy, 6),
        'journal_head': journal.head,
        'journal_valid': valid,
    }, sort_keys=True))
    return EXIT_OK


def cmd_infer(args):
    config_path = args.config or os.path.join(os.path.dirname(args.model_file), 'model.json')
    config = load_config(config_path)
    model = build_model(config.spec, config.seed)
    load_params(args.model_file, model.params)
    x = read_tensor(args.input_tensor)
    expected = config.spec.input_shape
    if x.ndim == len(expected):
        x = x[np.newaxis]
    if tuple(x.shape[1:]) != expected or x.ndim != 5:
        raise DimensionError(f"Tenseur d'entrée {tuple(x.shape)}, attendu [N, {', '.join(map(str, expected))}]"
                             f" ou [{', '.join(map(str, expected))}]")
    logits = predict(model, x)
    print(json.dumps({
        'logits': [[float(v) for v in row] for row in logits],
        'argmax': [int(i) for i in logits.argmax(axis=1)],
    }))
    return EXIT_OK


def cmd_config(args):
    Config.afficher_config()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='ast', description="Affine-Shift / VAST : analyse, contrôles et entraînement jouet")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('describe', help="paramètres et MACs d'un modèle")
    p.add_argument('--model', required=True, help="ast|vast-ti|s|m")
    p.add_argument('--frames', type=int)
    p.add_argument('--resolution', type=int, default=224)
    p.add_argument('--stem', choices=[k.value for k in StemKind])
    p.add_argument('--num-classes', type=int, default=1000)
    p.add_argument('--views', type=_parse_views, default=1)
    p.add_argument('--flops-x2', action='store_true')
    p.add_argument('--format', choices=REPORT_FORMATS, default='table')
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser('gradcheck', help="contrôle des gradients par différences finies")
    p.add_argument('--scope', choices=SCOPES, required=True)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--seeds', type=int, default=Config.GRADCHECK_SEEDS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser('train-toy', help="entraînement sur une tâche jouet")
    p.add_argument('--task', choices=[k.value for k in TaskKind], default=TaskKind.TEMPORAL_ORDER.value)
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.add_argument('--epochs', type=int, default=Config.EPOCHS)
    p.add_argument('--samples', type=int, default=Config.TOY_SAMPLES)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--save-dataset', action='store_true')
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser('infer', help="logits d'un point de contrôle sur un tenseur TNSR")
    p.add_argument('--model-file', required=True)
    p.add_argument('--config')
    p.add_argument('--input-tensor', required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser('config', help="affiche la configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None):
    logging.basicConfig(level=getattr(logging, Config.LOG_LEVEL, logging.WARNING),
                        format='%(levelname)s %(name)s: %(message)s')
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AstError as e:
        print(f"Erreur : {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"Erreur de fichier : {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
