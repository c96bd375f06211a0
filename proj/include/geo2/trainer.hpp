#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geo2/geoflow.hpp"
#include "geo2/geomap.hpp"
#include "geo2/objectives.hpp"
#include "geo2/synthdata.hpp"
#include "geo2/velocitynet.hpp"

namespace geo2::trainer {

using ad::Mat;

// Epochs are global and cumulative: stage 1 covers [0, t1), stage 2 [t1, t2),
// the joint finetune [t2, t3).
struct RunConfig {
    int t1 = 50;
    int t2 = 500;
    int t3 = 550;
    double eta1 = 1e-4;  // retrieval head rate
    double eta2 = 2e-4;  // flow rate
    double eta3 = 1e-4;  // head rate during the joint finetune
    int batch_size = 128;
    bool adaptive = false;  // Adam behind a flag; plain gradient descent is the default
    int val_every = 10;     // held-out R@1 cadence, epochs
    uint64_t seed = 0;

    int flow_image = 48;  // square side images are resized to before encoding
    int codec_factor = 8;
    uint64_t codec_seed = 303;
    double pano_v_range = kPi / 2;  // must match the dataset renders

    objectives::LossConfig loss;
    geomap::GeoMapConfig geomap;
    flow::VelocityNetConfig velocity;

    void validate() const;
};

// JSON round trip; objects may be partial, unknown keys are rejected
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);
// hex content hash of the canonical JSON form; stored in checkpoints
std::string config_digest(const RunConfig& cfg);

struct EpochLog {
    int epoch = 0;
    int stage = 0;
    double l_gl = 0, l_ig = 0, l_kl = 0, r1_val = 0;  // NaN marks "not computed"
    std::string json() const;                         // one canonical JSON line
};

// checkpoint weights into freshly constructed models, without a dataset;
// validates the config digest and backbone hash like a training resume
void load_weights(const std::filesystem::path& path, const RunConfig& cfg,
                  geomap::GeoMapModel& model, flow::VelocityNet& net);

// Owns both models, the codec, the optimizer state and the epoch counter.
// All randomness is drawn from streams keyed by (seed, purpose, epoch,
// batch), so there is no RNG state to carry across a checkpoint: resuming
// from epoch k replays exactly the arithmetic of an uninterrupted run.
class Trainer {
  public:
    Trainer(RunConfig cfg, const synth::DatasetManifest& manifest);

    void train_stage1();     // runs while epoch < t1
    void train_stage2();     // runs while epoch < t2; requires stage 1 complete
    void joint_finetune();   // runs while epoch < t3; requires stage 2 complete
    // all three in order; stops early after max_epochs epochs when given
    void run_schedule(std::optional<int> max_epochs = std::nullopt);

    void save_checkpoint(const std::filesystem::path& path);
    void load_checkpoint(const std::filesystem::path& path);

    // eval-mode recall@1, val-split queries against the full satellite bank
    double validation_r1();
    // mean pairwise symmetric KL over the val split at the current weights
    double validation_kl();

    int epoch() const { return epoch_; }
    int stage() const;  // stage the next epoch would belong to
    const std::vector<EpochLog>& logs() const { return logs_; }
    void write_log(const std::filesystem::path& path) const;

    geomap::GeoMapModel& geomap() { return geomap_; }
    flow::VelocityNet& velocity() { return velocity_; }
    const flow::SpaceToDepthCodec& codec() const { return codec_; }
    long adam_steps_head() const { return adam_head_.t; }
    long adam_steps_flow() const { return adam_flow_.t; }

    int train_size() const { return static_cast<int>(train_.size()); }
    int val_size() const { return static_cast<int>(val_.size()); }
    // raw images for synthesis-side evaluation, val split
    const Image& val_ground(int i) const;
    const Image& val_satellite(int i) const;

    const RunConfig cfg;

  private:
    struct RefSat {
        std::string id;
        Image img;
        geomap::ViewFeatures feat;
        Mat latent;
    };
    struct Item {
        std::string id;
        Image ground;
        geomap::ViewFeatures feat;
        Mat latent;
        int sat = 0;                 // index into refs_
        std::vector<int> positives;  // indices into refs_
    };

    void ensure_features();
    void ensure_latents();
    void refresh_conditions();
    Eigen::VectorXd eval_embed(const geomap::ViewFeatures& f, bool ground);
    Mat encode_resized(const Image& img);
    bool take_budget();
    double retrieval_epoch(bool with_kl, double lr, double& kl_out);
    double flow_epoch();
    void finish_epoch(int stage, double l_gl, double l_ig, double l_kl);
    void step_head(double lr);

    geomap::GeoMapModel geomap_;
    flow::VelocityNet velocity_;
    flow::SpaceToDepthCodec codec_;
    nn::Adam adam_head_, adam_flow_;
    nn::Sgd sgd_head_, sgd_flow_;

    std::vector<RefSat> refs_;
    std::vector<Item> train_, val_;
    std::vector<Eigen::VectorXd> cond_;  // per train item, refreshed per phase/epoch

    int epoch_ = 0;
    int budget_ = -1;  // epochs left in the current run_schedule call; -1 = unlimited
    bool features_ready_ = false, latents_ready_ = false;
    std::vector<EpochLog> logs_;
};

}  // namespace geo2::trainer
