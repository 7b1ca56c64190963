use proptest::prelude::*;

use pcdiff::cli::{Checkpoint, Config, Task};
use pcdiff::data::{win_rate, GroundTruthReward, MixtureSpec};
use pcdiff::ddpm::{ddpm_step, q_sample, DiffusionModel, NoiseSchedule};
use pcdiff::guidance::{guided_step, GuidanceConfig};
use pcdiff::nn::{RngStream, Tensor};
use pcdiff::oracle::{tilt_distribution, DiscreteChain};
use pcdiff::prefclassifier::{pc_loss_from_log_scores, PcLossConfig, PreferenceClassifier};

const LN2: f64 = std::f64::consts::LN_2;

fn schedule_params() -> impl Strategy<Value = (usize, f64, f64)> {
    (2usize..200, 1e-6f64..0.5, 0.0f64..1.0).prop_map(|(t, lo, frac)| (t, lo, lo + frac * (0.9 - lo)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_identities((steps, lo, hi) in schedule_params()) {
        let s = NoiseSchedule::linear(steps, lo, hi).unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        prop_assert_eq!(s.sigma2(1), 0.0);
        let mut prod = 1.0;
        for t in 1..=steps {
            prop_assert!((s.alpha(t) - (1.0 - s.beta(t))).abs() <= 1e-14);
            prop_assert!((s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() <= 1e-14);
            let sigma2 = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
            prop_assert!((s.sigma2(t) - sigma2).abs() <= 1e-14);
            prod *= 1.0 - s.beta(t);
        }
        prop_assert!((s.alpha_bar(steps) - prod).abs() <= 1e-14 * prod);
    }

    #[test]
    fn score_stays_in_open_unit_interval(x in prop::array::uniform2(-1e6f64..1e6), seed in any::<u64>(), t in 1usize..=10) {
        let mut rng = RngStream::new(seed);
        let mut clf = PreferenceClassifier::init(2, &[8], true, 10, &mut rng).unwrap();
        let scaled: Vec<f64> = clf.trunk.flat_params().iter().map(|p| p * 50.0).collect();
        clf.trunk.set_flat_params(&scaled).unwrap();
        let x = Tensor::vector(&x);
        let s = clf.score(&x, t).unwrap();
        prop_assert!(s > 0.0 && s < 1.0, "score {}", s);
        prop_assert!(clf.log_score(&x, t).unwrap().is_finite());
        prop_assert!(clf.log_score_grad(&x, t).unwrap().grad.is_finite());
    }

    #[test]
    fn swapping_winner_and_loser(l in prop::collection::vec(prop::array::uniform4(-20.0f64..0.0), 1..16), beta in 1e-3f64..1.0) {
        let cfg = PcLossConfig::new(beta, 50).unwrap();
        let swapped: Vec<[f64; 4]> = l.iter().map(|r| [r[2], r[3], r[0], r[1]]).collect();
        let (a, b) = (pc_loss_from_log_scores(&l, &cfg).unwrap(), pc_loss_from_log_scores(&swapped, &cfg).unwrap());
        prop_assert!(a + b >= 2.0 * LN2 - 1e-12);
        let mirrored: Vec<[f64; 4]> = l.iter().map(|r| [r[0], r[1], r[0], r[1]]).collect();
        prop_assert_eq!(pc_loss_from_log_scores(&mirrored, &cfg).unwrap(), LN2);
    }

    #[test]
    fn tilt_is_a_distribution(raw in prop::collection::vec((1e-3f64..1.0, 1e-3f64..10.0), 1..16), c in 1e-3f64..100.0) {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let p: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
        let s: Vec<f64> = raw.iter().map(|r| r.1).collect();
        let tilted = tilt_distribution(&p, &s).unwrap();
        prop_assert!((tilted.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(tilted.iter().all(|&v| v > 0.0));
        let flat = tilt_distribution(&p, &vec![c; p.len()]).unwrap();
        for (a, b) in flat.iter().zip(&p) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn random_chains_satisfy_the_tilting_identity(n in 1usize..=16, steps in 1usize..=8, seed in any::<u64>()) {
        let chain = DiscreteChain::random(n, steps, &mut RngStream::new(seed)).unwrap();
        let report = pcdiff::oracle::verify_theorem1(&chain).unwrap();
        prop_assert!(report.max_error <= 1e-10, "{}", report.max_error);
    }

    #[test]
    fn win_rates_are_complementary(a in prop::collection::vec(-4.0f64..4.0, 2..60), seed in any::<u64>()) {
        let n = a.len() / 2;
        let mut rng = RngStream::new(seed);
        let b: Vec<f64> = (0..2 * n).map(|_| 2.0 * rng.normal()).collect();
        let ta = Tensor::from_vec(&[n, 2], a[..2 * n].to_vec()).unwrap();
        let tb = Tensor::from_vec(&[n, 2], b).unwrap();
        let reward = GroundTruthReward::ModeIndicator { spec: MixtureSpec::two_mode(2), preferred: 1 };
        let (ab, ba) = (win_rate(&ta, &tb, &reward).unwrap(), win_rate(&tb, &ta, &reward).unwrap());
        prop_assert!((ab + ba - 1.0).abs() <= 1e-12);
        prop_assert_eq!(win_rate(&ta, &ta, &reward).unwrap(), 0.5);
    }

    #[test]
    fn q_sample_noiseless_branch(x in prop::collection::vec(-10.0f64..10.0, 1..5), t in 1usize..=50) {
        let sched = NoiseSchedule::linear(50, 1e-4, 0.04).unwrap();
        let x0 = Tensor::vector(&x);
        let zero = Tensor::vector(&vec![0.0; x.len()]);
        let out = q_sample(&x0, t, &zero, &sched).unwrap();
        prop_assert_eq!(out, x0.scale(sched.alpha_bar(t).sqrt()));
    }

    #[test]
    fn zero_weight_guidance_is_plain_ddpm(x in prop::array::uniform2(-3.0f64..3.0), t in 1usize..=10, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let model = DiffusionModel::init(2, &[8], NoiseSchedule::linear(10, 1e-4, 0.04).unwrap(), &mut rng).unwrap();
        let clf = PreferenceClassifier::init(2, &[4], false, 10, &mut rng).unwrap();
        let cfg = GuidanceConfig { gamma: 0.0, ..GuidanceConfig::default() };
        let x = Tensor::from_vec(&[1, 2], x.to_vec()).unwrap();
        let (mut r1, mut r2) = (RngStream::new(seed ^ 1), RngStream::new(seed ^ 1));
        let guided = guided_step(&x, t, &model, &clf, &cfg, &mut r1).unwrap();
        prop_assert_eq!(guided, ddpm_step(&x, t, &model, &mut r2).unwrap());
        prop_assert_eq!(r1.next_u64(), r2.next_u64());
    }

    #[test]
    fn checkpoints_round_trip_bit_exact(seed in any::<u64>(), hidden in prop::collection::vec(1usize..12, 1..4)) {
        let mut rng = RngStream::new(seed);
        let sched = NoiseSchedule::linear(20, 1e-4, 0.04).unwrap();
        let model = DiffusionModel::init(2, &hidden, sched.clone(), &mut rng).unwrap();
        let mut bytes = Vec::new();
        Checkpoint::from_diffusion(&model, seed).write_to(&mut bytes).unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap().into_diffusion().unwrap();
        let bits = |m: &DiffusionModel| m.net.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&model));
        prop_assert_eq!(back.schedule, model.schedule);

        let clf = PreferenceClassifier::init(2, &hidden, seed % 2 == 0, 20, &mut rng).unwrap();
        let mut bytes = Vec::new();
        Checkpoint::from_classifier(&clf, &sched, seed).write_to(&mut bytes).unwrap();
        prop_assert_eq!(Checkpoint::from_bytes(&bytes).unwrap().into_classifier().unwrap(), clf);
    }

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(),
        steps in 2usize..500,
        gamma in 0.0f64..1e5,
        m in 0usize..20,
        rejection in any::<bool>(),
        task in prop::sample::select(vec![Task::TwoMode, Task::TwoMode1d, Task::TwoMoons]),
    ) {
        let mut cfg = Config::default();
        cfg.seed = seed;
        cfg.schedule.steps = steps;
        cfg.guidance.gamma = gamma;
        cfg.guidance.max_resamples = m;
        cfg.guidance.rejection_enabled = rejection;
        cfg.data.task = task;
        let (back, _) = Config::parse_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
