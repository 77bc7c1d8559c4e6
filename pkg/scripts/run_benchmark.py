"""Shapes benchmark: train on (optionally degraded) labels, report held-out IoU per epoch.

    python3 scripts/run_benchmark.py --mode boundary --seed 0
    python3 scripts/run_benchmark.py --mode truncate --lr 0.0005 --batch 32 --every 5
"""
import argparse
import time

from moveseg.benchmark import shapes_data
from moveseg.datasetgen import DatasetParams, DegradeParams
from moveseg.evalmetrics import score
from moveseg.learner import DESK_LAYERS, TrainConfig, infer_mask, init_net, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", default="none", choices=["none", "boundary", "truncate"])
    ap.add_argument("--kernel", type=int, default=5)
    ap.add_argument("--fraction", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=1000)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    ap.add_argument("--batch", type=int, default=TrainConfig.batch_size)
    ap.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    ap.add_argument("--every", type=int, default=5, help="evaluate every N epochs")
    args = ap.parse_args()

    degrade = DegradeParams(args.mode, args.kernel, args.fraction)
    tr = shapes_data(args.n_train, 2 * args.seed, DatasetParams(seed=args.seed, degrade=degrade))
    te = shapes_data(args.n_test, 2 * args.seed + 1, DatasetParams(seed=args.seed))
    print(f"training labels vs clean: IoU {score(list(tr.labels), list(tr.gt)).mean_iou:.4f}")

    t0 = time.time()

    def report(epoch, net):
        if epoch % args.every == 0 or epoch == args.epochs:
            j = score(list(infer_mask(net, te.images)), list(te.gt)).mean_iou
            print(f"epoch {epoch:3d}  held-out IoU {j:.4f}  ({time.time() - t0:.0f}s)", flush=True)

    net = init_net(DESK_LAYERS, 64, 16, seed=args.seed)
    train(net, tr.images, tr.targets,
          TrainConfig(args.lr, 0.9, args.batch, args.epochs, args.seed), on_epoch=report)


if __name__ == "__main__":
    main()
