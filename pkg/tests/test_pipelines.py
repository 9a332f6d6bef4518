from __future__ import annotations

import numpy as np
import pytest

import metameta.pipelines.three_step as three_step_mod
from metameta.aggregator import AggregateModel, agg_init
from metameta.clustering import Centroids, EmbeddingSpec
from metameta.config import (
    AggregatorConfig,
    ClusteringConfig,
    LearnerConfig,
    MamlConfig,
    MetaConfig,
)
from metameta.errors import ClusteringError, ConfigError
from metameta.learner import LearnerInit, inner_train
from metameta.numerics import grad, mlp_forward
from metameta.numerics.rng import Rng
from metameta.pipelines import (
    BaggingPredictor,
    SingleLearnerPredictor,
    e2e_batch_loss,
    ensemble_decide,
    ensemble_predict,
    fiveway_predict,
    fiveway_scores,
    joint_params,
    make_predictor,
    nearest_cluster_predict,
    route,
    train_baseline_ensemble,
    train_end_to_end,
    train_single_maml,
    train_three_step,
)
from metameta.pipelines.end_to_end import random_model, split_joint
from metameta.pipelines.predictors import NearestClusterPredictor
from metameta.problems import ProblemDistribution, generate_modal_bank, sample_fiveway
from metameta.types import Activation, EnsembleMode, MethodId
from tests.fakes import (
    TINY_EPISODE,
    TINY_LEARNER,
    TINY_SPEC,
    ConstantPredictor,
    CountingDistribution,
    CountingProblem,
    DominantClassPredictor,
    OraclePredictor,
    central_differences,
    make_bank,
    make_problem,
    tiny_distribution,
)

TINY_META = MetaConfig(k=2, batch_size=2, meta_iterations=2, meta_lr=0.01, log_every=1)
TINY_AGG = AggregatorConfig(hidden_dims=[4], dropout_input=0.9, dropout_hidden=0.9)
TINY_CLUSTERING = ClusteringConfig(corpus_size=20, restarts=2, max_iters=10, samples_per_class=2)


def _modal_distribution(cls=ProblemDistribution):
    train, _, mode_of = generate_modal_bank(TINY_SPEC, Rng(0))
    return cls(train, TINY_EPISODE), mode_of


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------


def test_ensemble_decide_hand_examples():
    three = np.array([[0.9], [0.2], [0.2]])
    assert not ensemble_decide(three, EnsembleMode.SOFT)[0]
    assert not ensemble_decide(three, EnsembleMode.HARD)[0]

    split = np.array([[0.9], [0.3]])
    assert ensemble_decide(split, EnsembleMode.HARD)[0]

    half = np.array([[0.5]])
    assert not ensemble_decide(half, EnsembleMode.SOFT)[0]
    assert not ensemble_decide(half, EnsembleMode.HARD)[0]


def test_hard_and_soft_can_disagree():
    p = np.array([[0.55], [0.55], [0.0]])
    assert ensemble_decide(p, EnsembleMode.HARD)[0]
    assert not ensemble_decide(p, EnsembleMode.SOFT)[0]


def test_ensemble_predict_returns_bool_for_one_vector():
    learners = [LearnerInit.random([4, 3, 2], Rng(i)) for i in range(3)]
    fitted = [lr.params for lr in learners]
    single = ensemble_predict(fitted, EnsembleMode.SOFT, np.ones(4))
    batch = ensemble_predict(fitted, EnsembleMode.SOFT, np.ones((2, 4)))
    assert isinstance(single, bool)
    assert batch.shape == (2,) and batch[0] == single


def test_bagging_method_follows_mode():
    learners = (LearnerInit.random([4, 3, 2], Rng(0)),)
    tcfg = TINY_LEARNER.train_config()
    assert BaggingPredictor(learners, tcfg, EnsembleMode.HARD).method is MethodId.HARD_BAGGING
    assert BaggingPredictor(learners, tcfg, EnsembleMode.SOFT).method is MethodId.SOFT_BAGGING


def test_baseline_ensemble_members_are_distinct():
    mcfg = MamlConfig(meta_iterations=1, batch_size=2, meta_lr=0.01)
    members = train_baseline_ensemble(tiny_distribution(), 2, TINY_LEARNER, mcfg, Rng(0))
    assert len(members) == 2
    assert not members[0].params.equals(members[1].params)


def test_single_maml_is_a_one_member_ensemble():
    mcfg = MamlConfig(meta_iterations=1, batch_size=2, meta_lr=0.01)
    single = train_single_maml(tiny_distribution(), TINY_LEARNER, mcfg, Rng(3))
    ensemble = train_baseline_ensemble(tiny_distribution(), 1, TINY_LEARNER, mcfg, Rng(3))
    assert single.params.equals(ensemble[0].params)


def test_baseline_ensemble_rejects_empty():
    with pytest.raises(ConfigError):
        train_baseline_ensemble(tiny_distribution(), 0, TINY_LEARNER, MamlConfig(), Rng(0))


# ---------------------------------------------------------------------------
# End-to-end
# ---------------------------------------------------------------------------


def test_e2e_zero_iterations_returns_the_random_start():
    cfg = TINY_META.model_copy(update={"meta_iterations": 0})
    model = train_end_to_end(tiny_distribution(), cfg, TINY_LEARNER, Rng(0), TINY_AGG)
    start = random_model(4, 2, TINY_LEARNER, TINY_AGG, Rng(0))
    assert joint_params(model).equals(joint_params(start))


@pytest.mark.parametrize("steps", [1, 5])
def test_e2e_gradient_matches_central_differences(steps):
    lcfg = LearnerConfig(
        hidden_dims=[3], inner_steps=steps, inner_lr=0.1, activation=Activation.TANH
    )
    model = random_model(4, 2, lcfg, AggregatorConfig(hidden_dims=[3]), Rng(1))
    batch = [tiny_distribution().sample(Rng(2).child(i)) for i in range(2)]
    joint = joint_params(model)

    def loss(p):
        return e2e_batch_loss(p, model, batch)

    analytic = grad(loss, joint)
    numeric = central_differences(loss, joint)
    for a, n in zip(analytic.arrays, numeric.arrays):
        assert np.allclose(a, n, rtol=1e-4, atol=1e-6)


def test_e2e_is_deterministic_and_moves_every_part():
    a = train_end_to_end(tiny_distribution(), TINY_META, TINY_LEARNER, Rng(5), TINY_AGG)
    b = train_end_to_end(tiny_distribution(), TINY_META, TINY_LEARNER, Rng(5), TINY_AGG)
    start = random_model(4, 2, TINY_LEARNER, TINY_AGG, Rng(5))

    assert joint_params(a).equals(joint_params(b))
    assert not a.agg.params.equals(start.agg.params)
    for trained, initial in zip(a.learners, start.learners):
        assert not trained.params.equals(initial.params)


def test_e2e_reports_phase_steps():
    seen = []
    train_end_to_end(
        tiny_distribution(),
        TINY_META,
        TINY_LEARNER,
        Rng(0),
        TINY_AGG,
        on_step=lambda *a: seen.append(a[:2]),
    )
    assert seen == [("e2e", 0), ("e2e", 1)]


def test_e2e_rejects_zero_learners():
    cfg = MetaConfig.model_construct(**{**TINY_META.model_dump(), "k": 0})
    with pytest.raises(ConfigError):
        train_end_to_end(tiny_distribution(), cfg, TINY_LEARNER, Rng(0), TINY_AGG)


def test_e2e_warm_start_must_match_k():
    warm = random_model(4, 3, TINY_LEARNER, TINY_AGG, Rng(0))
    with pytest.raises(ConfigError):
        train_end_to_end(
            tiny_distribution(), TINY_META, TINY_LEARNER, Rng(0), TINY_AGG, warm_start=warm
        )


def test_joint_params_split_roundtrip():
    model = random_model(4, 2, TINY_LEARNER, TINY_AGG, Rng(0))
    back = split_joint(model, joint_params(model))
    assert back.agg.params.equals(model.agg.params)
    assert all(a.params.equals(b.params) for a, b in zip(back.learners, model.learners))


# ---------------------------------------------------------------------------
# Three-step
# ---------------------------------------------------------------------------


def test_three_step_produces_centroids_and_k_learners():
    dist, _ = _modal_distribution()
    model = train_three_step(dist, TINY_META, TINY_LEARNER, TINY_CLUSTERING, Rng(0), TINY_AGG)
    assert model.k == 2
    assert model.centroids is not None
    assert model.centroids.k == 2 and model.centroids.dim == 4


def test_three_step_learners_see_only_their_cluster(monkeypatch):
    dist, mode_of = _modal_distribution()
    real = three_step_mod.maml_train
    positives_per_learner = []

    def recording(stream, init, tcfg, mcfg, on_step=None):
        seen = set()
        positives_per_learner.append(seen)

        def tap():
            for problem in stream:
                seen.add(problem.positive_class)
                yield problem

        return real(tap(), init, tcfg, mcfg, on_step=on_step)

    monkeypatch.setattr(three_step_mod, "maml_train", recording)
    train_three_step(dist, TINY_META, TINY_LEARNER, TINY_CLUSTERING, Rng(0), TINY_AGG)

    assert len(positives_per_learner) == 2
    a, b = positives_per_learner
    assert a and b and a.isdisjoint(b)
    assert len({mode_of[c] for c in a}) == 1
    assert len({mode_of[c] for c in b}) == 1


def test_three_step_never_reads_mode_hints(monkeypatch):
    monkeypatch.setattr(CountingProblem, "reads", 0)
    dist, _ = _modal_distribution(CountingDistribution)
    train_three_step(dist, TINY_META, TINY_LEARNER, TINY_CLUSTERING, Rng(0), TINY_AGG)
    assert dist.positives
    assert CountingProblem.reads == 0


def test_three_step_with_one_cluster():
    dist, _ = _modal_distribution()
    cfg = TINY_META.model_copy(update={"k": 1})
    model = train_three_step(dist, cfg, TINY_LEARNER, TINY_CLUSTERING, Rng(0), TINY_AGG)
    assert model.k == 1 and model.centroids.k == 1


def test_three_step_does_not_depend_on_the_worker_count():
    dist, _ = _modal_distribution()
    runs = []
    for threads in (1, 2):
        seen = []
        model = train_three_step(
            dist,
            TINY_META,
            TINY_LEARNER,
            TINY_CLUSTERING,
            Rng(0),
            TINY_AGG,
            threads=threads,
            on_step=lambda *a, seen=seen: seen.append(a),
        )
        runs.append((model, seen))

    (serial, serial_steps), (pooled, pooled_steps) = runs
    assert serial_steps == pooled_steps
    assert all(a.params.equals(b.params) for a, b in zip(serial.learners, pooled.learners))
    assert serial.agg.params.equals(pooled.agg.params)


def test_three_step_reports_each_phase():
    dist, _ = _modal_distribution()
    phases = []
    train_three_step(
        dist,
        TINY_META,
        TINY_LEARNER,
        TINY_CLUSTERING,
        Rng(0),
        TINY_AGG,
        on_step=lambda phase, it, loss: phases.append(phase),
    )
    assert phases == ["learner0"] * 2 + ["learner1"] * 2 + ["aggregator"] * 2


# ---------------------------------------------------------------------------
# Nearest cluster
# ---------------------------------------------------------------------------


def _routed_model(centroids=True):
    learners = tuple(LearnerInit.random([4, 3, 2], Rng(i)) for i in range(2))
    agg = agg_init(4, 2, Rng(0), hidden_dims=(3,))
    mu = np.array([[0.0, 0.0, 0.0, 0.0], [5.0, 5.0, 5.0, 5.0]])
    c = Centroids(mu, EmbeddingSpec(), 0.0) if centroids else None
    return AggregateModel(learners, TINY_LEARNER.train_config(), agg, c)


def test_route_picks_the_nearest_centroid():
    model = _routed_model()
    near_one = make_problem([5.0, -5.0, 4.9, 5.1], [[0.0, 0.0, 0.0, 0.0]])
    near_zero = make_problem([-0.1, 0.2, 0.0, 0.1], [[5.0, 5.0, 5.0, 5.0]])
    assert route(model, near_one.train_set) == 1
    assert route(model, near_zero.train_set) == 0

    scorer = NearestClusterPredictor(model).fit(near_one.train_set)
    assert scorer.cluster == 1


def test_nearest_cluster_predict_shapes():
    model = _routed_model()
    problem = make_problem([5.0, 5.0, 5.0, 5.0], [[0.0, 0.0, 0.0, 0.0]])
    assert isinstance(nearest_cluster_predict(model, problem.train_set, np.ones(4)), bool)
    assert nearest_cluster_predict(model, problem.train_set, np.ones((3, 4))).shape == (3,)


def test_nearest_cluster_reuses_the_meta_meta_learners():
    model = _routed_model()
    problem = make_problem([5.0, 5.0, 5.0, 5.0], [[0.0, 0.0, 0.0, 0.0]])
    near = make_predictor(MethodId.NEAREST_CLUSTER, model.learners, model.tcfg, model)
    meta = make_predictor(MethodId.META_META, model.learners, model.tcfg, model)
    assert near.model is meta.model

    scorer = near.fit(problem.train_set)
    assert scorer.cluster == 1
    assert scorer.params.equals(inner_train(model.learners[1], problem.train_set, model.tcfg))
    assert meta.fit(problem.train_set).fit.fitted[1].equals(scorer.params)


def test_nearest_cluster_needs_centroids():
    model = _routed_model(centroids=False)
    with pytest.raises(ClusteringError):
        NearestClusterPredictor(model)
    with pytest.raises(ClusteringError):
        make_predictor(MethodId.NEAREST_CLUSTER, model.learners, model.tcfg, model)


def test_make_predictor_errors():
    model = _routed_model()
    with pytest.raises(ConfigError):
        make_predictor(MethodId.SINGLE_MAML, model.learners, model.tcfg)
    with pytest.raises(ConfigError):
        make_predictor(MethodId.META_META, model.learners, model.tcfg, None)


def test_make_predictor_methods():
    model = _routed_model()
    methods = [m for m in MethodId if m is not MethodId.SINGLE_MAML]
    for method in methods:
        assert make_predictor(method, model.learners, model.tcfg, model).method is method


# ---------------------------------------------------------------------------
# Five-way
# ---------------------------------------------------------------------------


def test_fiveway_follows_the_dominant_scorer():
    bank = make_bank(n_classes=8)
    fw = sample_fiveway(bank, Rng(0))
    predictor = DominantClassPredictor(favourite=fw.classes[2])
    assert np.all(fiveway_predict(predictor, fw) == 2)


def test_fiveway_oracle_is_always_right():
    bank = make_bank(n_classes=8, per_class=20)
    fw = sample_fiveway(bank, Rng(1))
    assert np.array_equal(fiveway_predict(OraclePredictor(bank), fw), fw.query_labels)


def test_fiveway_ties_go_to_the_first_class():
    fw = sample_fiveway(make_bank(n_classes=8), Rng(2))
    scores = fiveway_scores(ConstantPredictor(), fw)
    assert scores.shape == (5, 75)
    assert np.all(fiveway_predict(ConstantPredictor(), fw) == 0)


def _softmax_yes(logits):
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z[:, 1] / z.sum(axis=1)


def test_scorers_report_the_softmax_yes_probability():
    model = _routed_model()
    problem = make_problem([1.0, -1.0, 0.5, 2.0], [[0.0, 1.0, 1.0, 0.0], [3.0, 0.0, -2.0, 1.0]])
    x = Rng(6).normal((7, 4))
    meta_meta = make_predictor(MethodId.META_META, model.learners, model.tcfg, model)
    for scorer in (
        meta_meta.fit(problem.train_set),
        NearestClusterPredictor(model).fit(problem.train_set),
    ):
        p = scorer.yes_scores(x)
        assert np.allclose(p, _softmax_yes(scorer.logits(x)), rtol=0, atol=1e-14)
        assert np.all((p >= 0.0) & (p <= 1.0))


def test_fiveway_picks_the_highest_yes_probability():
    fw = sample_fiveway(make_bank(n_classes=8, per_class=20), Rng(3))
    learner = LearnerInit.random(TINY_LEARNER.arch(4), Rng(4))
    predictor = SingleLearnerPredictor(learner, TINY_LEARNER.train_config())

    probs = np.stack(
        [
            _softmax_yes(
                mlp_forward(
                    inner_train(learner, fw.ova_support(i), predictor.tcfg),
                    fw.query_features,
                    learner.activation,
                )
            )
            for i in range(fw.n_way)
        ]
    )
    assert np.allclose(fiveway_scores(predictor, fw), probs, rtol=0, atol=1e-12)
    assert np.array_equal(fiveway_predict(predictor, fw), np.argmax(probs, axis=0))
