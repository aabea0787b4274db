#include "cli.hpp"

#include "fsdet/error.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>

namespace fsdet::cli {
namespace {

struct TrainOptions {
    std::filesystem::path pairs;
    std::filesystem::path out;
    std::filesystem::path loss_log;
    RanConfig ran;
    TrainConfig train;
};

void run(const TrainOptions& o) {
    o.ran.validate();
    o.train.validate();
    const auto pairs = read_pairs(o.pairs);
    if (pairs.empty() && o.train.epochs > 0) throw InvalidArgument("pairs file is empty");

    const auto log_path = o.loss_log.empty() ? std::filesystem::path(o.out.string() + ".loss.csv") : o.loss_log;
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw IoError("cannot write " + log_path.string());
    log << "epoch,loss\n";

    const auto result = train_ran(pairs, o.ran, o.train, [&](int epoch, double loss) {
        if (!std::isfinite(loss)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        log << epoch << "," << Json(loss).dump() << "\n";
        log.flush();
        std::cerr << "epoch " << epoch << " loss " << loss << "\n";
    });
    if (!log) throw IoError("write failed for " + log_path.string());

    save_checkpoint(o.out, result.head);
    const Json side{{"format", "RAN1"},
                    {"ran", ran_config_to_json(o.ran)},
                    {"train", train_config_to_json(o.train)},
                    {"pairs", pairs.size()},
                    {"final_loss", result.epoch_loss.empty() ? Json(nullptr) : Json(result.epoch_loss.back())}};
    std::ofstream sf(sidecar_path(o.out), std::ios::binary);
    sf << side.dump(2) << "\n";
    if (!sf) throw IoError("cannot write " + sidecar_path(o.out).string());
}

}  // namespace

void add_train_ran(CLI::App& app) {
    auto opt = std::make_shared<TrainOptions>();
    auto* sub = app.add_subcommand("train-ran", "Train the region alignment head on a pairs file");
    sub->add_option("--config", "TOML or JSON file with flag values");
    sub->add_option("--pairs", opt->pairs, "pairs.jsonl from gen-synth --pairs")->required();
    sub->add_option("--out", opt->out, "Checkpoint path")->required();
    sub->add_option("--loss-log", opt->loss_log, "Per-epoch loss CSV (default: CKPT.loss.csv)");
    sub->add_option("--epochs", opt->train.epochs, "Training epochs");
    sub->add_option("--seed", opt->train.seed, "Initialization and shuffling seed");
    sub->add_option("--lr", opt->train.learning_rate, "Adam learning rate");
    sub->add_option("--final-lr-scale", opt->train.final_lr_scale, "Cosine decay floor as a fraction of --lr");
    sub->add_option("--batch", opt->train.batch_size, "Mini-batch size");
    sub->add_option("--embedding", opt->ran.embedding_length, "Descriptor length L");
    sub->add_option("--patch-width", opt->ran.patch_width, "Patch width W");
    sub->add_option("--patch-height", opt->ran.patch_height, "Patch height H");
    sub->add_option("--lambda-w", opt->ran.lambda_w, "Width scale bound");
    sub->add_option("--lambda-h", opt->ran.lambda_h, "Height scale bound");
    sub->callback([sub, opt] {
        echo_config(*sub);
        run(*opt);
    });
}

}  // namespace fsdet::cli
