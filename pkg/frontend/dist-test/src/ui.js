/** Browser bootstrap: canvas rendering, palette, mouse handling.
 *
 * Whole-image rendering with client-side zoom/pan; hint, draw and delete
 * modes share one screen. Manual study mode is the same screen with the
 * hint tool disabled.
 */
import { ApiClient } from "./api.js";
import { AnnotatorController } from "./controller.js";
import { ViewTransform } from "./geometry.js";
const CLASS_COLORS = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231",
    "#911eb4", "#46f0f0", "#f032e6", "#bcf60c",
    "#fabebe", "#008080", "#e6beff", "#9a6324",
];
function classColor(classId) {
    return CLASS_COLORS[classId % CLASS_COLORS.length] ?? "#ffffff";
}
function el(tag, parent, cls) {
    const node = document.createElement(tag);
    if (cls)
        node.className = cls;
    parent.appendChild(node);
    return node;
}
export async function boot(root) {
    const params = new URLSearchParams(window.location.search);
    const dataset = params.get("dataset") ?? "test";
    const mode = (params.get("mode") ?? "assisted");
    const api = new ApiClient("");
    const info = await api.datasetInfo();
    const imageIds = info.splits[dataset] ?? [];
    const imageId = params.get("image") ?? imageIds[0];
    if (!imageId) {
        root.textContent = `dataset ${dataset} has no images`;
        return;
    }
    const sessionId = await api.createSession(dataset, mode);
    const refs = {
        banner: el("div", root, "banner"),
        toast: el("div", root, "toast"),
        modes: el("div", root, "modes"),
        palette: el("div", root, "palette"),
        canvas: el("canvas", root),
        status: el("div", root, "status"),
    };
    refs.canvas.width = 900;
    refs.canvas.height = 700;
    const ctx = refs.canvas.getContext("2d");
    if (!ctx)
        throw new Error("no 2d context");
    const image = new Image();
    const view = new ViewTransform();
    let boxes = [];
    let dragStart = null;
    let dragNow = null;
    let panStart = null;
    function draw() {
        ctx.fillStyle = "#202228";
        ctx.fillRect(0, 0, refs.canvas.width, refs.canvas.height);
        if (image.complete && image.naturalWidth) {
            ctx.save();
            ctx.imageSmoothingEnabled = view.scale < 3;
            ctx.setTransform(view.scale, 0, 0, view.scale, view.offsetX, view.offsetY);
            ctx.drawImage(image, 0, 0);
            ctx.restore();
        }
        for (const box of boxes) {
            const a = view.imageToCanvas({ x: box.bbox[0], y: box.bbox[1] });
            const b = view.imageToCanvas({ x: box.bbox[2], y: box.bbox[3] });
            ctx.strokeStyle = classColor(box.classId);
            ctx.lineWidth = box.source === "manual" ? 2 : 1.2;
            ctx.setLineDash(box.source === "manual" ? [] : [4, 2]);
            ctx.strokeRect(a.x, a.y, b.x - a.x, b.y - a.y);
        }
        ctx.setLineDash([]);
        for (const hint of controller.state.hints) {
            const p = view.imageToCanvas(hint);
            ctx.fillStyle = classColor(hint.class_id);
            ctx.beginPath();
            ctx.arc(p.x, p.y, 4, 0, Math.PI * 2);
            ctx.fill();
            ctx.strokeStyle = "#ffffff";
            ctx.stroke();
        }
        if (dragStart && dragNow) {
            ctx.strokeStyle = classColor(controller.state.selectedClass);
            ctx.setLineDash([3, 3]);
            ctx.strokeRect(dragStart.x, dragStart.y, dragNow.x - dragStart.x, dragNow.y - dragStart.y);
            ctx.setLineDash([]);
        }
        refs.status.textContent =
            `session ${sessionId.slice(0, 8)} | image ${imageId} | mode ` +
                `${controller.state.mode} | ${boxes.length} boxes | ` +
                `${controller.state.hints.length} hints`;
    }
    const controller = new AnnotatorController(api, sessionId, imageId, mode, {
        onBoxesChanged: (next) => {
            boxes = next;
            draw();
        },
        onError: (message) => {
            refs.banner.textContent = message;
            refs.banner.style.display = "block";
            window.setTimeout(() => (refs.banner.style.display = "none"), 4000);
        },
        onSubmitted: () => {
            refs.toast.textContent = "annotations saved";
            refs.toast.style.display = "block";
            window.setTimeout(() => (refs.toast.style.display = "none"), 2000);
        },
        onBoxRejected: (reason) => {
            refs.banner.textContent = reason;
            refs.banner.style.display = "block";
            window.setTimeout(() => (refs.banner.style.display = "none"), 2000);
        },
    });
    // Class palette.
    info.classes.forEach((name, classId) => {
        const chip = el("button", refs.palette, "chip");
        chip.textContent = name;
        chip.style.borderColor = classColor(classId);
        chip.onclick = () => {
            void controller.selectClass(classId);
            for (const other of refs.palette.children) {
                other.classList.remove("active");
            }
            chip.classList.add("active");
            draw();
        };
        if (classId === 0)
            chip.classList.add("active");
    });
    // Mode buttons and submit.
    const modeNames = mode === "manual" ? ["draw", "delete"] : ["hint", "draw", "delete"];
    if (mode === "manual")
        controller.setMode("draw");
    modeNames.forEach((m) => {
        const btn = el("button", refs.modes, "mode");
        btn.textContent = m;
        btn.onclick = () => {
            controller.setMode(m);
            for (const other of refs.modes.children)
                other.classList.remove("active");
            btn.classList.add("active");
            draw();
        };
        if (m === controller.state.mode)
            btn.classList.add("active");
    });
    const submitBtn = el("button", refs.modes, "submit");
    submitBtn.textContent = "submit";
    submitBtn.onclick = () => void controller.submit();
    // Mouse interaction.
    refs.canvas.addEventListener("wheel", (ev) => {
        ev.preventDefault();
        const rect = refs.canvas.getBoundingClientRect();
        view.zoomAt({ x: ev.clientX - rect.left, y: ev.clientY - rect.top }, ev.deltaY < 0 ? 1.2 : 1 / 1.2);
        draw();
    });
    refs.canvas.addEventListener("mousedown", (ev) => {
        const rect = refs.canvas.getBoundingClientRect();
        const cp = { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
        if (ev.button === 1 || ev.shiftKey) {
            panStart = { ...cp, ox: view.offsetX, oy: view.offsetY };
            return;
        }
        if (controller.state.mode === "draw") {
            dragStart = cp;
            dragNow = cp;
        }
    });
    refs.canvas.addEventListener("mousemove", (ev) => {
        const rect = refs.canvas.getBoundingClientRect();
        const cp = { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
        if (panStart) {
            view.offsetX = panStart.ox + cp.x - panStart.x;
            view.offsetY = panStart.oy + cp.y - panStart.y;
            draw();
            return;
        }
        if (dragStart) {
            dragNow = cp;
            draw();
        }
    });
    refs.canvas.addEventListener("mouseup", (ev) => {
        const rect = refs.canvas.getBoundingClientRect();
        const cp = { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
        if (panStart) {
            panStart = null;
            return;
        }
        if (controller.state.mode === "draw" && dragStart) {
            const a = view.canvasToImage(dragStart);
            const b = view.canvasToImage(cp);
            dragStart = null;
            dragNow = null;
            void controller.onDrawBox(a.x, a.y, b.x, b.y);
            draw();
            return;
        }
        const ip = view.canvasToImage(cp);
        if (controller.state.mode === "hint") {
            void controller.onHintClick(ip.x, ip.y).then(draw);
        }
        else if (controller.state.mode === "delete") {
            // Topmost (last drawn) box containing the click.
            for (let i = boxes.length - 1; i >= 0; i -= 1) {
                const bb = boxes[i].bbox;
                if (ip.x >= bb[0] && ip.x <= bb[2] && ip.y >= bb[1] && ip.y <= bb[3]) {
                    void controller.onDeleteBox(i);
                    break;
                }
            }
        }
    });
    image.onload = () => {
        controller.setImageSize(image.naturalWidth, image.naturalHeight);
        view.fit(image.naturalWidth, image.naturalHeight, refs.canvas.width, refs.canvas.height);
        draw();
    };
    image.src = api.imageUrl(imageId);
    draw();
}
if (typeof window !== "undefined") {
    window.c3detBoot = boot;
    const root = document.getElementById("app");
    if (root)
        void boot(root);
}
//# sourceMappingURL=ui.js.map