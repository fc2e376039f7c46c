import numpy as np
import pytest
import torch

from demonav.selfcheck import GradScene, fd_gradient_check


@pytest.fixture(scope="module")
def scene():
    return GradScene(seed=0)


def test_quadratic_closed_form():
    p = torch.randn(7, 5, dtype=torch.float64, requires_grad=True)

    def loss_fn():
        return (p**2).sum()

    report = fd_gradient_check(loss_fn, [p], n_coords=35, h=1e-4)
    assert report.max_rel_err <= 1e-6
    loss = (p**2).sum()
    p.grad = None
    loss.backward()
    assert torch.allclose(p.grad, 2 * p.detach())


def test_actor_forward_gradients(scene):
    report = fd_gradient_check(scene.actor_forward_loss, list(scene.actor.parameters()), n_coords=60)
    assert report.max_rel_err <= 1e-4


def test_critic_objective_gradients(scene):
    report = fd_gradient_check(scene.critic_loss, list(scene.critic.parameters()), n_coords=60)
    assert report.max_rel_err <= 1e-4


def test_actor_objective_gradients(scene):
    report = fd_gradient_check(scene.actor_objective_loss, list(scene.actor.parameters()), n_coords=60)
    assert report.max_rel_err <= 1e-4


def test_bc_gradients(scene):
    report = fd_gradient_check(scene.bc_loss, list(scene.actor.parameters()), n_coords=60)
    assert report.max_rel_err <= 1e-4


def test_uninfluential_params_get_exact_zero(scene):
    # critic parameters play no role in the actor-forward loss
    params = list(scene.actor.parameters()) + list(scene.critic.parameters())
    for p in params:
        p.grad = None
    loss = scene.actor_forward_loss()
    loss.backward()
    for p in scene.critic.parameters():
        assert p.grad is None or torch.all(p.grad == 0)
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in scene.actor.parameters())


def test_expert_action_encoder_on_gradient_path(scene):
    # with nonzero attention weight on a demo step, the value (expert action)
    # encoder must receive gradient
    for p in scene.actor.parameters():
        p.grad = None
    loss = scene.actor_forward_loss()
    loss.backward()
    enc_grads = [p.grad for p in scene.actor.action_encoder.parameters()]
    assert all(g is not None for g in enc_grads)
    assert sum(float(g.abs().sum()) for g in enc_grads) > 0


def test_nonfinite_loss_rejected():
    p = torch.zeros(3, dtype=torch.float64, requires_grad=True)

    def bad_loss():
        return (1.0 / p).sum()

    with pytest.raises(ValueError):
        fd_gradient_check(bad_loss, [p], n_coords=3)
