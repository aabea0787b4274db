#include "fixtures.hpp"

#include "fsdet/synth.hpp"

#include <mutex>

namespace testing {

fsdet::RanConfig trained_config() {
    fsdet::RanConfig cfg;
    cfg.embedding_length = 64;
    return cfg;
}

const fsdet::MlpHead& trained_head() {
    static fsdet::MlpHead head;
    static std::once_flag once;
    std::call_once(once, [] {
        fsdet::SynthConfig sc;
        sc.n_categories = 100000;
        sc.instances_per_scene = 4;
        sc.size_jitter = 0.2;
        sc.seed = 1;
        std::vector<fsdet::Scene> scenes;
        for (std::size_t i = 0; i < 400; ++i) scenes.push_back(fsdet::gen_scene(sc, fsdet::scene_seed(sc, i)));
        fsdet::JitterConfig jc;
        jc.seed = 7;
        const auto pairs = fsdet::gen_ran_pairs(scenes, jc, trained_config(), 8000);
        fsdet::TrainConfig tc;
        tc.epochs = 30;
        tc.learning_rate = 2e-3;
        tc.final_lr_scale = 0.05;
        tc.seed = 3;
        head = fsdet::train_ran(pairs, trained_config(), tc).head;
    });
    return head;
}

}  // namespace testing
