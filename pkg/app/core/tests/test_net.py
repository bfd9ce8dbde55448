import numpy as np
import torch

from django.test import SimpleTestCase

from core.exceptions import DomainError, ModelError, ShapeError
from core.net.layers import TwoLayerMLP, step_embedding
from core.net.model import (
    ModelConfig,
    denoise_predict,
    encode_scene,
    init_params,
    loss_mse,
    relative_pose_features,
)
from core.net.representation import (
    POLYNOMIAL,
    SEQUENCE,
    decode_futures,
    future_targets,
    scene_features,
)
from core.scene import agent_pose, pack_features, transform_scene

from .utils import create_agent, create_scene


def tiny_config(**params) -> ModelConfig:
    """Returns a ModelConfig small enough for unit tests"""

    defaults = {
        'hidden_dim': 16,
        'n_enc_blocks': 1,
        'n_denoise_blocks': 1,
        'n_heads': 2,
        'steps': 50,
    }
    defaults.update(params)

    return ModelConfig(**defaults)


class TestLayers(SimpleTestCase):
    """Tests for the network building blocks"""

    def test_step_embedding(self) -> None:
        """Tests the embedding of step 0 and the output width"""

        embedding = step_embedding(torch.tensor([0, 10, 500]), 16)

        self.assertEqual(tuple(embedding.shape), (3, 16))
        np.testing.assert_allclose(embedding[0, :8].numpy(), 0.0)
        np.testing.assert_allclose(embedding[0, 8:].numpy(), 1.0)
        self.assertFalse(torch.allclose(embedding[1], embedding[2]))

    def test_two_layer_mlp(self) -> None:
        """Tests the output shape of the embedding MLP"""

        mlp = TwoLayerMLP(7, 16, 5)

        self.assertEqual(tuple(mlp(torch.zeros(3, 4, 7)).shape), (3, 4, 5))

    def test_relative_pose_features(self) -> None:
        """Tests the pair features of two hand-placed poses"""

        features = relative_pose_features(
            [[0.0, 0.0, np.pi / 2]], [[0.0, 0.0, 0.0], [0.0, 3.0, np.pi]]
        )

        np.testing.assert_allclose(
            features[0, 0], [0.0, 0.0, 1.0, -1.0, 0.0], atol=1e-12
        )
        np.testing.assert_allclose(
            features[0, 1], [np.log(4.0), 0.0, 1.0, 1.0, 0.0], atol=1e-12
        )

    def test_relative_pose_features_invariant(self) -> None:
        """Tests if the pair features ignore a global rigid motion"""

        rng = np.random.default_rng(4)
        frames = rng.uniform(-20.0, 20.0, size=(6, 3))
        angle, shift = 1.1, np.array([30.0, -12.0])
        cos, sin = np.cos(angle), np.sin(angle)
        moved = frames.copy()
        moved[:, :2] = frames[:, :2] @ np.array([[cos, sin], [-sin, cos]])
        moved[:, :2] += shift
        moved[:, 2] += angle

        np.testing.assert_allclose(
            relative_pose_features(frames, frames),
            relative_pose_features(moved, moved),
            atol=1e-9,
        )


class TestSceneDiffuser(SimpleTestCase):
    """Tests for the encoder and denoiser"""

    def setUp(self) -> None:
        """Creates a scene and an untrained model"""

        self.scene = create_scene()
        self.model = init_params(tiny_config(), seed=0)
        self.model.eval()

    def predict(self, scene, x, steps):
        cond = encode_scene(pack_features(scene), self.model)
        with torch.no_grad():
            return denoise_predict(x, steps, cond, self.model)

    def test_output_shape(self) -> None:
        """Tests if batched samples keep their shape"""

        x = torch.randn(3, 2, 12)
        eps_hat = self.predict(self.scene, x, torch.tensor(7))

        self.assertEqual(tuple(eps_hat.shape), (3, 2, 12))

    def test_deterministic_initialization(self) -> None:
        """Tests if one seed yields identical parameters"""

        other = init_params(tiny_config(), seed=0)
        third = init_params(tiny_config(), seed=1)

        self.assertTrue(
            torch.equal(self.model.head.weight, other.head.weight)
        )
        self.assertFalse(
            torch.equal(self.model.head.weight, third.head.weight)
        )

    def test_invariant_to_rigid_motion(self) -> None:
        """Tests if a rotated and shifted scene gets the same prediction"""

        scene = create_scene(
            agents=[
                create_agent('a', (2.0, -1.0), (4.0, 1.0)),
                create_agent('b', (15.0, 6.0), (-3.0, 0.5)),
            ]
        )
        moved = transform_scene(scene, 2.3, np.array([-250.0, 80.0]))
        x = torch.randn(2, 2, 12, generator=torch.Generator().manual_seed(0))
        steps = torch.tensor([[5, 40], [1, 50]])

        torch.testing.assert_close(
            self.predict(scene, x, steps),
            self.predict(moved, x, steps),
            atol=1e-4,
            rtol=1e-4,
        )

    def test_agent_order_equivariant(self) -> None:
        """Tests if swapping two agents swaps their predictions"""

        swapped = create_scene(agents=tuple(reversed(self.scene.agents)))
        x = torch.randn(2, 12, generator=torch.Generator().manual_seed(1))
        steps = torch.tensor([3, 30])

        torch.testing.assert_close(
            self.predict(self.scene, x, steps).flip(0),
            self.predict(swapped, x.flip(0), steps.flip(0)),
            atol=1e-5,
            rtol=1e-5,
        )

    def test_wrong_input_shape(self) -> None:
        """Tests what happens when x has the wrong number of agents"""

        with self.assertRaises(ShapeError):
            self.predict(self.scene, torch.zeros(3, 12), torch.tensor(1))

    def test_step_out_of_range(self) -> None:
        """Tests what happens when a step index exceeds S"""

        with self.assertRaises(DomainError):
            self.predict(self.scene, torch.zeros(2, 12), torch.tensor(51))

    def test_representation_mismatch(self) -> None:
        """Tests what happens when sequence features meet a polynomial model"""

        with self.assertRaises(ModelError):
            encode_scene(scene_features(self.scene, SEQUENCE), self.model)

    def test_loss(self) -> None:
        """Tests the squared error summed over components"""

        self.assertEqual(
            float(loss_mse(torch.zeros(4, 3), torch.ones(4, 3))), 3.0
        )
        with self.assertRaises(ShapeError):
            loss_mse(torch.zeros(4, 3), torch.zeros(4, 2))

    def test_gradients_match_finite_differences(self) -> None:
        """Tests backpropagation against central differences in 64 bits"""

        model = init_params(
            tiny_config(hidden_dim=8, dropout=0.0, steps=10), seed=3
        ).double()
        model.eval()
        features = pack_features(self.scene)
        generator = torch.Generator().manual_seed(2)
        x = torch.randn(2, 12, generator=generator, dtype=torch.float64)
        eps = torch.randn(2, 12, generator=generator, dtype=torch.float64)
        steps = torch.tensor([3, 7])

        def loss() -> torch.Tensor:
            cond = encode_scene(features, model)
            return loss_mse(eps, denoise_predict(x, steps, cond, model))

        model.zero_grad()
        loss().backward()
        h = 1e-4
        for name, parameter in model.named_parameters():
            gradient = float(parameter.grad.reshape(-1)[0])
            with torch.no_grad():
                flat = parameter.view(-1)
                flat[0] += h
                upper = float(loss())
                flat[0] -= 2 * h
                lower = float(loss())
                flat[0] += h
            numeric = (upper - lower) / (2 * h)
            with self.subTest(parameter=name):
                self.assertLess(
                    abs(numeric - gradient), 1e-4 * max(abs(gradient), 1e-3)
                )


class TestParameterCount(SimpleTestCase):
    """Tests for the model size"""

    def test_wider_model_is_larger(self) -> None:
        """Tests if D=128 has more parameters than D=64"""

        small = init_params(tiny_config(hidden_dim=64, n_heads=4))
        large = init_params(tiny_config(hidden_dim=128, n_heads=4))

        self.assertGreater(large.parameter_count, small.parameter_count)

    def test_sequence_model_is_larger(self) -> None:
        """Tests if the sequence representation widens the model"""

        polynomial = init_params(tiny_config())
        sequence = init_params(tiny_config(representation=SEQUENCE))

        self.assertGreater(
            sequence.parameter_count, polynomial.parameter_count
        )

    def test_full_size_model(self) -> None:
        """Tests if the full-size model has about three million parameters"""

        model = init_params(
            ModelConfig(
                hidden_dim=128,
                n_enc_blocks=4,
                n_denoise_blocks=7,
                n_heads=8,
            )
        )

        self.assertTrue(2.4e6 <= model.parameter_count <= 3.6e6)


class TestRepresentation(SimpleTestCase):
    """Tests for the polynomial and sequence representations"""

    def setUp(self) -> None:
        """Creates a scene of two straight movers"""

        self.scene = create_scene()

    def test_sequence_widths(self) -> None:
        """Tests the widths of sequence inputs and targets"""

        features = scene_features(self.scene, SEQUENCE)

        self.assertEqual(features.hist_disp.shape, (2, 100))
        self.assertEqual(features.map_disp.shape, (2, 20))
        self.assertEqual(future_targets(self.scene, SEQUENCE).shape, (2, 120))
        np.testing.assert_allclose(
            features.hist_disp[0], np.tile([0.5, 0.0], 50), atol=1e-9
        )

    def test_polynomial_targets_decode_to_futures(self) -> None:
        """Tests if decoded targets reproduce the ground-truth futures"""

        features = pack_features(self.scene)
        decoded = decode_futures(
            future_targets(self.scene, POLYNOMIAL),
            features.agent_frame,
            POLYNOMIAL,
        )

        for agent, curve in zip(self.scene.agents, decoded):
            np.testing.assert_allclose(
                curve.control_points, agent.future.control_points, atol=1e-9
            )

    def test_sequence_decoding_starts_at_agent(self) -> None:
        """Tests if decoded sequences start at the last observed position"""

        features = scene_features(self.scene, SEQUENCE)
        decoded = decode_futures(
            future_targets(self.scene, SEQUENCE),
            features.agent_frame,
            SEQUENCE,
        )

        for agent, traj in zip(self.scene.agents, decoded):
            position, _, _ = agent_pose(agent)
            self.assertEqual(traj.points.shape, (61, 2))
            np.testing.assert_allclose(traj.points[0], position, atol=1e-9)
            np.testing.assert_allclose(
                traj.points[-1], agent.future.end, atol=1e-9
            )

    def test_missing_ground_truth(self) -> None:
        """Tests what happens when the scene has no futures"""

        scene = create_scene(agents=[create_agent(with_future=False)])
        with self.assertRaises(DomainError):
            future_targets(scene, POLYNOMIAL)
        with self.assertRaises(DomainError):
            future_targets(scene, SEQUENCE)
