// Lightweight three.js scene for the robot avatar. Visual fidelity is
// not the goal; every one of the seven face DoFs, the head orientation,
// both end effectors, and the target marker must be visibly faithful.

import * as THREE from "three";
import { Pose, Vec3, quatFromRotvec } from "./pose.js";
import { AvatarState } from "./state.js";

function poseQuaternion(p: Pose): THREE.Quaternion {
  const [w, x, y, z] = quatFromRotvec(p.rotvec);
  return new THREE.Quaternion(x, y, z, w);
}

interface Eye {
  group: THREE.Group;
  cylinder: THREE.Mesh;
  lidUp: THREE.Mesh;
  lidLow: THREE.Mesh;
}

export class AvatarScene {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private readonly renderer: THREE.WebGLRenderer;
  private readonly head = new THREE.Group();
  private readonly eyes: { left: Eye; right: Eye };
  private readonly ears: { left: THREE.Mesh; right: THREE.Mesh };
  private readonly hands: { left: THREE.Group; right: THREE.Group };
  private readonly target: THREE.Mesh;

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setSize(canvas.clientWidth, canvas.clientHeight, false);
    this.camera = new THREE.PerspectiveCamera(45, canvas.clientWidth / canvas.clientHeight, 0.05, 20);
    this.camera.position.set(0, -1.1, 0.75);
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(0, 0.3, 0.4);
    this.scene.background = new THREE.Color(0x101318);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(-1, -2, 2);
    this.scene.add(key);

    const ground = new THREE.Mesh(
      new THREE.PlaneGeometry(3, 3),
      new THREE.MeshStandardMaterial({ color: 0x1b2129 }),
    );
    this.scene.add(ground);

    // head: face plane + eyes + ears, pivoting at a neck point
    this.head.position.set(0, 0.3, 0.45);
    const facePlate = new THREE.Mesh(
      new THREE.BoxGeometry(0.34, 0.045, 0.24),
      new THREE.MeshStandardMaterial({ color: 0x2d3a4d }),
    );
    this.head.add(facePlate);
    this.eyes = { left: this.makeEye(-0.08), right: this.makeEye(0.08) };
    this.head.add(this.eyes.left.group, this.eyes.right.group);
    const earGeo = new THREE.BoxGeometry(0.025, 0.02, 0.11);
    const earMat = new THREE.MeshStandardMaterial({ color: 0x7fd0ff });
    this.ears = { left: new THREE.Mesh(earGeo, earMat), right: new THREE.Mesh(earGeo, earMat) };
    this.ears.left.position.set(-0.2, 0, 0.1);
    this.ears.right.position.set(0.2, 0, 0.1);
    this.head.add(this.ears.left, this.ears.right);
    this.scene.add(this.head);

    this.hands = { left: this.makeHandGizmo(0x7fff9e), right: this.makeHandGizmo(0xffc27f) };
    this.scene.add(this.hands.left, this.hands.right);

    this.target = new THREE.Mesh(
      new THREE.ConeGeometry(0.025, 0.06, 12),
      new THREE.MeshStandardMaterial({ color: 0xff5f7a }),
    );
    this.target.rotation.x = Math.PI / 2;
    this.scene.add(this.target);
  }

  private makeEye(x: number): Eye {
    const group = new THREE.Group();
    group.position.set(x, -0.035, 0.02);
    const cylinder = new THREE.Mesh(
      new THREE.CylinderGeometry(0.035, 0.035, 0.02, 24),
      new THREE.MeshStandardMaterial({ color: 0xe8f4ff, emissive: 0x3, emissiveIntensity: 0.2 }),
    );
    cylinder.rotation.x = Math.PI / 2; // face the operator
    group.add(cylinder);
    const lidMat = new THREE.MeshStandardMaterial({ color: 0x18202b });
    const lidUp = new THREE.Mesh(new THREE.BoxGeometry(0.085, 0.01, 0.012), lidMat);
    const lidLow = new THREE.Mesh(new THREE.BoxGeometry(0.085, 0.01, 0.012), lidMat);
    group.add(lidUp, lidLow);
    return { group, cylinder, lidUp, lidLow };
  }

  private makeHandGizmo(color: number): THREE.Group {
    const group = new THREE.Group();
    group.add(new THREE.Mesh(
      new THREE.SphereGeometry(0.03, 16, 12),
      new THREE.MeshStandardMaterial({ color }),
    ));
    group.add(new THREE.AxesHelper(0.09));
    return group;
  }

  /** Mirror the full avatar state into the scene graph. */
  update(avatar: AvatarState, target: Vec3): void {
    this.head.quaternion.copy(poseQuaternion(avatar.head));
    const [vLow, vUp, rEye, rEar, sEye, pX, pY] = avatar.face;
    for (const side of ["left", "right"] as const) {
      const eye = this.eyes[side];
      eye.group.position.x = (side === "left" ? -0.08 : 0.08) + pX * 0.035;
      eye.group.position.z = 0.02 + pY * 0.035;
      eye.group.rotation.y = rEye;
      eye.cylinder.scale.set(1, 1, sEye);        // z after the x-rotation = eye height
      eye.lidUp.position.z = 0.02 + vUp * 0.035;
      eye.lidLow.position.z = -0.02 + vLow * 0.035;
    }
    // both ears take the same commanded angle
    this.ears.left.rotation.x = rEar;
    this.ears.right.rotation.x = rEar;
    this.hands.left.position.set(...avatar.handLeft.position);
    this.hands.left.quaternion.copy(poseQuaternion(avatar.handLeft));
    this.hands.right.position.set(...avatar.handRight.position);
    this.hands.right.quaternion.copy(poseQuaternion(avatar.handRight));
    this.target.position.set(...target);
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
